#include "losstomo/probe_sim.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "losstomo/error.hpp"
#include "losstomo/parallel.hpp"
#include "losstomo/rng.hpp"

namespace losstomo {

std::size_t ProbeTrace::column_of(NodeId receiver) const {
  const auto it = std::find(receivers.begin(), receivers.end(), receiver);
  if (it == receivers.end()) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("node {} is not a receiver of this trace", receiver));
  }
  return static_cast<std::size_t>(it - receivers.begin());
}

ProbeTrace simulate(const Tree& t, std::size_t n, std::uint64_t seed, SimulateOptions opts) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "probe count must be at least 1");

  ProbeTrace tr;
  tr.n = n;
  tr.seed = seed;
  tr.receivers.assign(t.receivers().begin(), t.receivers().end());
  const std::size_t width = tr.receivers.size();
  const std::size_t nodes = t.size();
  tr.y.assign(n * width, 0);
  if (opts.keep_hidden_states) tr.hidden.assign(n * nodes, 0);

  const auto order = t.preorder();
  const auto alpha = t.link_pass_rates();
  std::vector<NodeId> parent(nodes);
  for (NodeId k = 1; k < nodes; ++k) parent[k] = t.parent(k);

  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(
      blocks,
      [&](std::size_t b) {
        std::vector<std::uint8_t> state(nodes);
        const std::size_t end = std::min(n, (b + 1) * kBlock);
        for (std::size_t i = b * kBlock; i < end; ++i) {
          SplitMix64 rng = probe_stream(seed, StreamTag::Probe, i);
          state[0] = 1;
          // One draw per link regardless of upstream loss keeps the stream layout fixed.
          for (std::size_t p = 1; p < order.size(); ++p) {
            const NodeId k = order[p];
            const bool pass = rng.bernoulli(alpha[k]);
            state[k] = static_cast<std::uint8_t>(state[parent[k]] && pass);
          }
          for (std::size_t c = 0; c < width; ++c) tr.y[i * width + c] = state[tr.receivers[c]];
          if (opts.keep_hidden_states) {
            std::copy(state.begin(), state.end(), tr.hidden.begin() + static_cast<std::ptrdiff_t>(i * nodes));
          }
        }
      },
      opts.workers);
  return tr;
}

ProbeTrace inject_missing(const ProbeTrace& tr, const MissingModel& model, std::uint64_t seed) {
  ProbeTrace out = tr;
  const std::size_t width = out.width();
  if (!out.has_mask()) out.mask.assign(out.n * width, 0);

  if (const auto* mcar = std::get_if<Mcar>(&model)) {
    if (!(mcar->rate >= 0.0 && mcar->rate < 1.0)) {
      throw Error(ErrorCode::RateOutOfRange, fmt::format("MCAR rate {} is not in [0, 1)", mcar->rate));
    }
    if (mcar->rate == 0.0) return out;
    for (std::size_t i = 0; i < out.n; ++i) {
      SplitMix64 rng = probe_stream(seed, StreamTag::Missing, i);
      for (std::size_t c = 0; c < width; ++c) {
        if (rng.bernoulli(mcar->rate)) out.mask[i * width + c] = 1;
      }
    }
    return out;
  }

  const auto& mar = std::get<MarRule>(model);
  if (!(mar.probability >= 0.0 && mar.probability <= 1.0)) {
    throw Error(ErrorCode::RateOutOfRange, fmt::format("MAR probability {} is not in [0, 1]", mar.probability));
  }
  const std::size_t target = out.column_of(mar.masked_receiver);
  const std::size_t cond = out.column_of(mar.conditioning_receiver);
  for (std::size_t i = 0; i < out.n; ++i) {
    if (tr.observed(i, cond) != mar.when_observed) continue;
    SplitMix64 rng = probe_stream(seed, StreamTag::Missing, i);
    if (rng.bernoulli(mar.probability)) out.mask[i * width + target] = 1;
  }
  return out;
}

MissingModel parse_missing_model(const std::string& text) {
  if (text.empty() || text == "none") return Mcar{0.0};
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  try {
    if (parts[0] == "mcar" && parts.size() == 2) return Mcar{std::stod(parts[1])};
    if (parts[0] == "mar" && (parts.size() == 4 || parts.size() == 5)) {
      MarRule rule;
      rule.masked_receiver = std::stoul(parts[1]);
      rule.conditioning_receiver = std::stoul(parts[2]);
      rule.when_observed = static_cast<std::uint8_t>(std::stoi(parts[3]) != 0);
      if (parts.size() == 5) rule.probability = std::stod(parts[4]);
      return rule;
    }
  } catch (const std::logic_error&) {
    // fall through to the diagnostic below
  }
  throw Error(ErrorCode::InvalidArgument,
              fmt::format("missing-data model '{}' is not 'none', 'mcar:<p>' or "
                          "'mar:<masked>:<conditioning>:<0|1>[:<p>]'",
                          text));
}

void write_trace(std::ostream& out, const ProbeTrace& tr) {
  for (std::size_t c = 0; c < tr.width(); ++c) out << (c ? "," : "") << tr.receivers[c];
  out << '\n';
  std::string row;
  for (std::size_t i = 0; i < tr.n; ++i) {
    row.clear();
    for (std::size_t c = 0; c < tr.width(); ++c) {
      if (c) row.push_back(',');
      row.push_back(tr.masked(i, c) ? '?' : (tr.observed(i, c) ? '1' : '0'));
    }
    out << row << '\n';
  }
}

ProbeTrace read_trace(std::istream& in) {
  ProbeTrace tr;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, "trace is empty");
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        tr.receivers.push_back(std::stoul(cell));
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::Io, fmt::format("bad receiver id '{}' in trace header", cell));
      }
    }
  }
  const std::size_t width = tr.width();
  if (width == 0) throw Error(ErrorCode::Io, "trace header lists no receivers");
  bool any_mask = false;
  std::vector<std::uint8_t> mask;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t col = 0;
    for (std::size_t p = 0; p < line.size(); ++p) {
      const char ch = line[p];
      if (ch == ',') continue;
      if (col >= width || (ch != '0' && ch != '1' && ch != '?')) {
        throw Error(ErrorCode::Io, fmt::format("trace line {} is malformed", lineno));
      }
      tr.y.push_back(ch == '1');
      mask.push_back(ch == '?');
      any_mask = any_mask || ch == '?';
      ++col;
    }
    if (col != width) {
      throw Error(ErrorCode::Io, fmt::format("trace line {} has {} entries, expected {}", lineno, col, width));
    }
    ++tr.n;
  }
  if (tr.n == 0) throw Error(ErrorCode::Io, "trace has no probe rows");
  if (any_mask) tr.mask = std::move(mask);
  return tr;
}

}  // namespace losstomo
