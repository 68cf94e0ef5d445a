#include "clonesim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"

namespace clonesim {

void SynthConfig::validate() const {
    if (nodes < 0) throw ConfigError("nodes must be >= 0");
    if (p_intra < 0.0 || p_intra > 1.0) throw ConfigError("p_intra must be in [0,1]");
    if (p_inter < 0.0 || p_inter > 1.0) throw ConfigError("p_inter must be in [0,1]");
    if (weeks < 1) throw ConfigError("weeks must be >= 1");
    if (contacts_per_meeting_mean < 1.0)
        throw ConfigError("contacts_per_meeting_mean must be >= 1");
    if (contact_min_s < 1 || contact_max_s < contact_min_s)
        throw ConfigError("contact duration bounds invalid");
    if (contact_max_s > kSecondsPerDay) throw ConfigError("contacts must fit within a day");
    if (communities) {
        for (const auto& c : *communities)
            for (int m : c)
                if (m < 0 || m >= nodes) throw ConfigError("community member out of range");
    } else if (community_size < 1) {
        throw ConfigError("community_size must be >= 1");
    }
}

SynthConfig synth_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad generator config: ") + e.what());
    }
    SynthConfig cfg;
    try {
        cfg.nodes = j.value("nodes", cfg.nodes);
        cfg.community_size = j.value("community_size", cfg.community_size);
        cfg.p_intra = j.value("p_intra", cfg.p_intra);
        cfg.p_inter = j.value("p_inter", cfg.p_inter);
        cfg.weeks = j.value("weeks", cfg.weeks);
        cfg.contacts_per_meeting_mean =
            j.value("contacts_per_meeting_mean", cfg.contacts_per_meeting_mean);
        cfg.contact_min_s = j.value("contact_min_s", cfg.contact_min_s);
        cfg.contact_max_s = j.value("contact_max_s", cfg.contact_max_s);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("communities"))
            cfg.communities = j.at("communities").get<std::vector<std::vector<int>>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad generator config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string synth_config_to_json(const SynthConfig& cfg) {
    nlohmann::json j;
    j["nodes"] = cfg.nodes;
    j["community_size"] = cfg.community_size;
    if (cfg.communities) j["communities"] = *cfg.communities;
    j["p_intra"] = cfg.p_intra;
    j["p_inter"] = cfg.p_inter;
    j["weeks"] = cfg.weeks;
    j["contacts_per_meeting_mean"] = cfg.contacts_per_meeting_mean;
    j["contact_min_s"] = cfg.contact_min_s;
    j["contact_max_s"] = cfg.contact_max_s;
    j["seed"] = cfg.seed;
    return j.dump(2);
}

SynthConfig default_large_config() {
    SynthConfig cfg;
    cfg.nodes = 1500;
    cfg.community_size = 15;
    cfg.p_intra = 0.45;
    cfg.p_inter = 0.0007;
    cfg.weeks = 8;
    cfg.contacts_per_meeting_mean = 1.5;
    cfg.seed = 42;
    return cfg;
}

SynthConfig load_synth_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open generator config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return synth_config_from_json(ss.str());
}

namespace {

std::uint64_t rng_below(std::mt19937_64& rng, std::uint64_t n) {
    // Unbiased bounded draw via rejection; engine output is standardized,
    // so results are stable across platforms.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

double rng_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int rng_poisson(std::mt19937_64& rng, double lambda) {
    if (lambda <= 0.0) return 0;
    // Knuth's product method; lambdas here are small.
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng_unit(rng);
    } while (p > limit);
    return k - 1;
}

// Geometric jumps through a Bernoulli(p) trial sequence: returns the offset
// of the next success at or after the current position.
std::uint64_t rng_geometric_skip(std::mt19937_64& rng, double log1mp) {
    const double u = 1.0 - rng_unit(rng);  // (0,1]
    const double skip = std::floor(std::log(u) / log1mp);
    if (skip > 1e18) return static_cast<std::uint64_t>(1) << 62;
    return static_cast<std::uint64_t>(skip);
}

}  // namespace

ContactTrace generate(const SynthConfig& cfg) {
    cfg.validate();

    auto table = std::make_shared<EntityTable>();
    auto* mutable_table = table.get();
    std::vector<EntityId> ids;
    ids.reserve(static_cast<std::size_t>(cfg.nodes));
    {
        char name[16];
        for (int i = 0; i < cfg.nodes; ++i) {
            std::snprintf(name, sizeof name, "n%04d", i);
            ids.push_back(mutable_table->intern(name, EntityKind::MobileNode));
        }
    }

    const TimeSpan span{0, static_cast<Timestamp>(cfg.weeks) * kSecondsPerWeek};
    if (cfg.nodes == 0) return ContactTrace::from_events({}, table, span);

    // Membership lists for the shared-community test on stranger pairs.
    std::vector<std::vector<int>> communities;
    if (cfg.communities) {
        communities = *cfg.communities;
        for (auto& c : communities) {
            std::sort(c.begin(), c.end());
            c.erase(std::unique(c.begin(), c.end()), c.end());
        }
    } else {
        for (int base = 0; base + cfg.community_size <= cfg.nodes; base += cfg.community_size) {
            std::vector<int> c(static_cast<std::size_t>(cfg.community_size));
            for (int i = 0; i < cfg.community_size; ++i) c[static_cast<std::size_t>(i)] = base + i;
            communities.push_back(std::move(c));
        }
    }
    std::vector<std::vector<int>> member_of(static_cast<std::size_t>(cfg.nodes));
    for (std::size_t ci = 0; ci < communities.size(); ++ci)
        for (int m : communities[ci]) member_of[static_cast<std::size_t>(m)].push_back(static_cast<int>(ci));
    auto share_community = [&](int a, int b) {
        const auto& ca = member_of[static_cast<std::size_t>(a)];
        const auto& cb = member_of[static_cast<std::size_t>(b)];
        auto ia = ca.begin();
        auto ib = cb.begin();
        while (ia != ca.end() && ib != cb.end()) {
            if (*ia < *ib)
                ++ia;
            else if (*ib < *ia)
                ++ib;
            else
                return true;
        }
        return false;
    };

    const int days = cfg.weeks * 7;
    const auto n = static_cast<std::uint64_t>(cfg.nodes);
    const std::uint64_t total_pairs = n * (n - 1) / 2;
    const double log1mp =
        cfg.p_inter > 0.0 && cfg.p_inter < 1.0 ? std::log1p(-cfg.p_inter) : 0.0;

    // Pair index -> (i,j), enumerating j>i row by row; rows located by
    // binary search over cumulative row offsets.
    std::vector<std::uint64_t> row_start(n + 1, 0);
    for (std::uint64_t i = 0; i < n; ++i) row_start[i + 1] = row_start[i] + (n - 1 - i);
    auto pair_at = [&](std::uint64_t idx) {
        auto it = std::upper_bound(row_start.begin(), row_start.end(), idx);
        const auto i = static_cast<std::uint64_t>(it - row_start.begin()) - 1;
        return std::pair<int, int>(static_cast<int>(i),
                                   static_cast<int>(i + 1 + (idx - row_start[i])));
    };

    std::vector<ContactEvent> events;
    for (int day = 0; day < days; ++day) {
        std::mt19937_64 rng(mix64(cfg.seed, 0x5d417ull, static_cast<std::uint64_t>(day)));
        const Timestamp day_start = static_cast<Timestamp>(day) * kSecondsPerDay;

        auto emit_meeting = [&](int a, int b) {
            const int contacts = 1 + rng_poisson(rng, cfg.contacts_per_meeting_mean - 1.0);
            for (int c = 0; c < contacts; ++c) {
                const Seconds dur =
                    cfg.contact_min_s +
                    static_cast<Seconds>(rng_below(
                        rng, static_cast<std::uint64_t>(cfg.contact_max_s - cfg.contact_min_s + 1)));
                const Timestamp start =
                    day_start +
                    static_cast<Timestamp>(
                        rng_below(rng, static_cast<std::uint64_t>(kSecondsPerDay - dur + 1)));
                events.push_back(make_contact(ids[static_cast<std::size_t>(a)],
                                              ids[static_cast<std::size_t>(b)], start, start + dur));
            }
        };

        for (const auto& community : communities) {
            for (std::size_t x = 0; x < community.size(); ++x) {
                for (std::size_t y = x + 1; y < community.size(); ++y) {
                    if (rng_unit(rng) < cfg.p_intra) emit_meeting(community[x], community[y]);
                }
            }
        }

        if (cfg.p_inter > 0.0 && total_pairs > 0) {
            if (cfg.p_inter >= 1.0) {
                for (std::uint64_t idx = 0; idx < total_pairs; ++idx) {
                    auto [a, b] = pair_at(idx);
                    if (!share_community(a, b)) emit_meeting(a, b);
                }
            } else {
                std::uint64_t idx = rng_geometric_skip(rng, log1mp);
                while (idx < total_pairs) {
                    auto [a, b] = pair_at(idx);
                    if (!share_community(a, b)) emit_meeting(a, b);
                    idx += 1 + rng_geometric_skip(rng, log1mp);
                }
            }
        }
    }
    return ContactTrace::from_events(std::move(events), table, span);
}

}  // namespace clonesim
