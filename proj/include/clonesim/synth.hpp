#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clonesim/trace.hpp"

namespace clonesim {

// Community-structured Bernoulli meeting process. Pairs sharing a community
// meet with `p_intra` per day, all other pairs with `p_inter`; a meeting day
// yields one or more short contacts at uniform times within the day. The
// trace starts at t=0 and spans `weeks` whole weeks.
struct SynthConfig {
    int nodes = 50;
    // Disjoint blocks of this size by default; an explicit (possibly
    // overlapping) assignment below takes precedence.
    int community_size = 10;
    std::optional<std::vector<std::vector<int>>> communities;
    double p_intra = 0.35;
    double p_inter = 0.001;
    int weeks = 4;
    double contacts_per_meeting_mean = 1.5;  // 1 + Poisson(mean - 1)
    Seconds contact_min_s = 300;
    Seconds contact_max_s = 3600;
    std::uint64_t seed = 1;

    void validate() const;
};

SynthConfig synth_config_from_json(const std::string& text);
std::string synth_config_to_json(const SynthConfig& config);
SynthConfig load_synth_config(const std::string& path);

// Deterministic under the seed: per-day generator states are derived from
// (seed, day), so the result does not depend on evaluation order.
ContactTrace generate(const SynthConfig& config);

// Default full-scale configuration: 1500 nodes in 100 communities over
// eight weeks, calibrated so nodes re-meet roughly half of their training
// peers each week.
SynthConfig default_large_config();

}  // namespace clonesim
