#pragma once

// Bernoulli loss simulation over a multicast tree and missing-data injection.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "losstomo/tree.hpp"

namespace losstomo {

// Receiver observations of n probes. y and mask are row-major n x |R|; a set
// mask bit marks the entry as missing. Values under the mask are kept so tests
// can compare against the unmasked truth.
struct ProbeTrace {
  std::size_t n = 0;
  std::vector<NodeId> receivers;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> mask;
  std::uint64_t seed = 0;
  // n x |V| hidden pass states X_k^i; only filled when requested.
  std::vector<std::uint8_t> hidden;

  std::size_t width() const { return receivers.size(); }
  bool has_mask() const { return !mask.empty(); }
  std::uint8_t observed(std::size_t probe, std::size_t col) const { return y[probe * width() + col]; }
  bool masked(std::size_t probe, std::size_t col) const {
    return has_mask() && mask[probe * width() + col] != 0;
  }
  std::size_t column_of(NodeId receiver) const;
};

struct SimulateOptions {
  bool keep_hidden_states = false;
  unsigned workers = 1;
};

// Each probe walks the tree on its own SplitMix64 substream; link k passes with
// probability alpha_k. Output depends only on (t, n, seed).
ProbeTrace simulate(const Tree& t, std::size_t n, std::uint64_t seed, SimulateOptions opts = {});

// Missing completely at random: every entry is masked independently.
struct Mcar {
  double rate = 0.0;
};

// Missing at random: mask `masked_receiver` on probes where
// `conditioning_receiver` observed `when_observed`, with the given probability.
struct MarRule {
  NodeId masked_receiver = 0;
  NodeId conditioning_receiver = 0;
  std::uint8_t when_observed = 0;
  double probability = 1.0;
};

using MissingModel = std::variant<Mcar, MarRule>;

// Adds to any mask already present. Throws RateOutOfRange for rates outside
// [0, 1) (MCAR) or [0, 1] (MAR).
ProbeTrace inject_missing(const ProbeTrace& tr, const MissingModel& model, std::uint64_t seed);

// "none", "mcar:<p>" or "mar:<masked>:<conditioning>:<0|1>[:<p>]". "none" is Mcar{0}.
MissingModel parse_missing_model(const std::string& text);

// Plain-text trace format: a header line of receiver ids, then one
// comma-separated row of 0/1/? per probe.
void write_trace(std::ostream& out, const ProbeTrace& tr);
ProbeTrace read_trace(std::istream& in);

}  // namespace losstomo
