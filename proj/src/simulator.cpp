#include "clonesim/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

namespace clonesim {

const char* to_string(AdversaryKind kind) {
    return kind == AdversaryKind::Insider ? "insider" : "outsider";
}

const char* to_string(DetectionOutcome outcome) {
    switch (outcome) {
        case DetectionOutcome::DetectedByMarks: return "detected-by-marks";
        case DetectionOutcome::CertificateExpired: return "certificate-expired";
        case DetectionOutcome::NotDetected: return "not-detected";
    }
    return "?";
}

void SimulationConfig::validate() const {
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ConfigError("split_fraction must be in (0,1)");
    if (kclique_k < 3) throw ConfigError("kclique_k must be >= 3");
    if (min_days < 1) throw ConfigError("min_days must be >= 1");
    if (attack_sampling.samples_per_target < 1)
        throw ConfigError("attack sampling needs at least one instant per target");
}

std::vector<Timestamp> evaluation_day_starts(const TimeSpan& evaluation) {
    std::vector<Timestamp> starts;
    for (Timestamp t = evaluation.begin; t < evaluation.end; t += kSecondsPerDay)
        starts.push_back(t);
    if (starts.empty()) starts.push_back(evaluation.begin);
    return starts;
}

namespace {

// Deterministic per-target subset of attack instants.
std::vector<Timestamp> sample_attack_times(const std::vector<Timestamp>& day_starts,
                                           const AttackSampling& sampling, std::uint64_t seed,
                                           std::uint32_t victim, std::uint32_t donor) {
    if (sampling.policy == AttackSampling::Policy::EveryDayStart) return day_starts;
    std::mt19937_64 rng(mix64(seed, (static_cast<std::uint64_t>(victim) << 32) | donor, 0xa77ull));
    std::vector<Timestamp> pool = day_starts;
    std::vector<Timestamp> chosen;
    const auto want = std::min<std::size_t>(pool.size(),
                                            static_cast<std::size_t>(sampling.samples_per_target));
    for (std::size_t i = 0; i < want; ++i) {
        const std::uint64_t span = pool.size() - i;
        const auto pick = i + static_cast<std::size_t>(rng() % span);
        std::swap(pool[i], pool[pick]);
        chosen.push_back(pool[i]);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

struct ReplayEvent {
    Timestamp t;
    std::uint32_t member;
    std::uint8_t replica;  // 0 = victim device, 1 = clone
};

// Meetings of community members with the two replicas, in deterministic
// processing order. Victim meetings are its contact starts; clone meetings
// are the donor's contacts clipped to [t0, ...], since the clone powers up
// at t0 inside the donor's ongoing sessions. The victim's own pre-t0
// meetings are included to build up mark state that the fork then copies.
std::vector<ReplayEvent> build_replay_events(const NodeEventIndex& index,
                                             const AttackScenario& scenario,
                                             const std::vector<EntityId>& members) {
    std::vector<ReplayEvent> events;
    auto is_member = [&](EntityId id) {
        return std::binary_search(members.begin(), members.end(), id);
    };
    for (const ContactEvent& ev : index.events_of(scenario.victim)) {
        EntityId peer = ev.peer_of(scenario.victim);
        if (is_member(peer) && peer != scenario.donor)
            events.push_back(ReplayEvent{ev.start, peer.value, 0});
    }
    for (const ContactEvent& ev : index.events_of(scenario.donor)) {
        if (ev.end < scenario.t0) continue;
        EntityId peer = ev.peer_of(scenario.donor);
        if (is_member(peer) && peer != scenario.victim)
            events.push_back(ReplayEvent{std::max(ev.start, scenario.t0), peer.value, 1});
    }
    std::sort(events.begin(), events.end(), [](const ReplayEvent& a, const ReplayEvent& b) {
        return std::tie(a.t, a.member, a.replica) < std::tie(b.t, b.member, b.replica);
    });
    return events;
}

}  // namespace

DetectionReport run_insider_scenario(const NodeEventIndex& event_index,
                                     const CommunityIndex& index, const AttackScenario& scenario,
                                     const EntityTable& table, const WorldKeys& world,
                                     std::uint64_t seed) {
    DetectionReport report;
    report.scenario = scenario;

    // Detectors: the victim's community minus the adversary itself.
    std::vector<EntityId> members;
    for (EntityId m : index.neighbors_of(scenario.victim))
        if (m != scenario.donor) members.push_back(m);

    auto events = build_replay_events(event_index, scenario, members);

    Authority authority = world.make_authority();
    MeetingEnv env{world.scheme, world.directory, world.keys, authority};
    std::mt19937_64 rng(mix64(seed, (static_cast<std::uint64_t>(scenario.victim.value) << 32) |
                                        scenario.donor.value,
                              static_cast<std::uint64_t>(scenario.t0)));

    MarkStore victim_store(scenario.victim);
    MarkStore clone_store(scenario.victim);
    std::map<std::uint32_t, MarkStore> member_stores;
    for (EntityId m : members) member_stores.emplace(m.value, MarkStore(m));

    bool forked = false;
    for (const ReplayEvent& ev : events) {
        if (!forked && ev.t >= scenario.t0) {
            clone_store = victim_store.forked_copy();
            forked = true;
        }
        if (ev.replica == 0 && ev.t < scenario.t0) {
            // honest pre-attack meeting
            MarkStore& member = member_stores.at(ev.member);
            on_meeting(member, victim_store, ev.t, rng, env);
            continue;
        }
        MarkStore& member = member_stores.at(ev.member);
        MarkStore& replica = ev.replica == 0 ? victim_store : clone_store;
        MeetingPolicy policy;
        policy.b_refuses_checks = scenario.clone_refuses_checks && ev.replica == 1;
        MeetingOutcome outcome = on_meeting(member, replica, ev.t, rng, env, policy);
        if (outcome.any_failed()) {
            report.outcome = DetectionOutcome::DetectedByMarks;
            report.detector = table.id_at(ev.member);
            report.t_detect = ev.t;
            report.latency_days = static_cast<double>(ev.t - scenario.t0) /
                                  static_cast<double>(kSecondsPerDay);
            return report;
        }
    }
    report.outcome = DetectionOutcome::NotDetected;
    return report;
}

DetectionReport run_insider_scenario(const ContactTrace& evaluation, const CommunityIndex& index,
                                     const AttackScenario& scenario, const EntityTable& table,
                                     const WorldKeys& world, std::uint64_t seed) {
    NodeEventIndex events(evaluation);
    return run_insider_scenario(events, index, scenario, table, world, seed);
}

std::vector<DetectionReport> run_insider_experiment(const TraceSplit& split,
                                                    const std::vector<Community>& communities,
                                                    const SimulationConfig& config,
                                                    EntityTable& table) {
    config.validate();
    WorldKeys world = make_world_keys(table, config.seed);
    CommunityIndex index(communities);
    const auto day_starts = evaluation_day_starts(split.evaluation.span());

    std::vector<AttackScenario> scenarios;
    for (EntityId victim : index.nodes()) {
        for (EntityId donor : index.neighbors_of(victim)) {
            for (Timestamp t0 : sample_attack_times(day_starts, config.attack_sampling, config.seed,
                                                    victim.value, donor.value)) {
                AttackScenario s;
                s.victim = victim;
                s.donor = donor;
                s.t0 = t0;
                s.kind = AdversaryKind::Insider;
                scenarios.push_back(s);
            }
        }
    }

    NodeEventIndex event_index(split.evaluation);
    std::vector<DetectionReport> reports(scenarios.size());
    const unsigned hw = std::thread::hardware_concurrency();
    const std::size_t workers =
        std::max<std::size_t>(1, config.threads > 0 ? static_cast<std::size_t>(config.threads)
                                                    : (hw > 0 ? hw : 1));
    if (workers == 1 || scenarios.size() < 2 * workers) {
        for (std::size_t i = 0; i < scenarios.size(); ++i)
            reports[i] = run_insider_scenario(event_index, index, scenarios[i], table, world,
                                              config.seed);
    } else {
        // Scenarios are independent and the shared state is read-only; each
        // report lands in its own slot, so the output stays deterministic.
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= scenarios.size()) return;
                    reports[i] = run_insider_scenario(event_index, index, scenarios[i], table,
                                                      world, config.seed);
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    return reports;
}

std::vector<DetectionReport> run_outsider_experiment(const TraceSplit& split,
                                                     const std::vector<CommunityCertificate>& certs,
                                                     const SimulationConfig& config) {
    config.validate();
    const auto day_starts = evaluation_day_starts(split.evaluation.span());
    const Timestamp issue_time = split.boundary;

    NodeEventIndex event_index(split.evaluation);
    std::vector<DetectionReport> reports;
    for (const CommunityCertificate& cert : certs) {
        auto timeline = refresh_timeline(event_index.events_of(cert.owner), cert.owner, cert.friends);
        for (Timestamp t0 : sample_attack_times(day_starts, config.attack_sampling, config.seed,
                                                cert.owner.value, cert.owner.value)) {
            DetectionReport report;
            report.scenario.victim = cert.owner;
            report.scenario.donor = cert.owner;  // the outsider has no donor trace
            report.scenario.t0 = t0;
            report.scenario.kind = AdversaryKind::Outsider;
            report.outcome = DetectionOutcome::CertificateExpired;
            const Seconds left = remaining_validity(
                expiries_at(cert.windows, issue_time, timeline, t0), cert.threshold, t0);
            report.latency_days =
                static_cast<double>(left) / static_cast<double>(kSecondsPerDay);
            reports.push_back(report);
        }
    }
    return reports;
}

std::vector<FalsePositiveReport> run_false_positive_experiment(
    const TraceSplit& split, const std::vector<CommunityCertificate>& certs) {
    NodeEventIndex event_index(split.evaluation);
    std::vector<FalsePositiveReport> reports;
    const Timestamp issue_time = split.boundary;
    const Timestamp eval_end = split.evaluation.span().end;
    for (const CommunityCertificate& cert : certs) {
        FalsePositiveReport r;
        r.node = cert.owner;
        r.threshold = cert.threshold;
        auto timeline = refresh_timeline(event_index.events_of(cert.owner), cert.owner, cert.friends);
        r.refreshes = timeline.size();
        r.intervals =
            invalid_intervals(cert.windows, issue_time, timeline, cert.threshold, eval_end);
        for (const auto& [lo, hi] : r.intervals)
            r.max_interval_days = std::max(
                r.max_interval_days, static_cast<double>(hi - lo) / static_cast<double>(kSecondsPerDay));
        reports.push_back(std::move(r));
    }
    return reports;
}

std::vector<NodeAverage> per_victim_averages(const std::vector<DetectionReport>& reports) {
    std::map<std::uint32_t, NodeAverage> by_node;
    std::map<std::uint32_t, double> sums;
    for (const DetectionReport& r : reports) {
        auto& agg = by_node[r.scenario.victim.value];
        agg.node = r.scenario.victim;
        ++agg.scenarios;
        if (r.outcome == DetectionOutcome::NotDetected) {
            ++agg.unresolved;
        } else {
            sums[r.scenario.victim.value] += r.latency_days;
        }
    }
    std::vector<NodeAverage> out;
    for (auto& [value, agg] : by_node) {
        const std::size_t resolved = agg.scenarios - agg.unresolved;
        agg.average_days = resolved > 0 ? sums[value] / static_cast<double>(resolved) : 0.0;
        out.push_back(agg);
    }
    return out;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    return os;
}

void finish(std::ofstream& os, const std::string& path) {
    if (!os.flush()) throw IoError("write failed: " + path);
}

std::string format_days(double days) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", days);
    return buf;
}

}  // namespace

void write_scenarios_csv(const std::string& path, const std::vector<DetectionReport>& reports,
                         const EntityTable& table) {
    auto os = open_out(path);
    os << "victim,donor,kind,t0,outcome,latency_days\n";
    for (const DetectionReport& r : reports) {
        os << table.name(r.scenario.victim) << ',' << table.name(r.scenario.donor) << ','
           << to_string(r.scenario.kind) << ',' << r.scenario.t0 << ',' << to_string(r.outcome)
           << ',';
        if (r.outcome != DetectionOutcome::NotDetected) os << format_days(r.latency_days);
        os << '\n';
    }
    finish(os, path);
}

void write_node_averages_csv(const std::string& path, const std::vector<NodeAverage>& averages,
                             const EntityTable& table) {
    auto os = open_out(path);
    os << "node,average_days,scenarios,unresolved\n";
    for (const NodeAverage& a : averages) {
        os << table.name(a.node) << ',';
        if (a.scenarios > a.unresolved) os << format_days(a.average_days);
        os << ',' << a.scenarios << ',' << a.unresolved << '\n';
    }
    finish(os, path);
}

void write_ccdf_csv(const std::string& path, const std::vector<double>& values,
                    std::size_t infinite_values) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    auto os = open_out(path);
    os << "x_days,node_count\n";
    const std::size_t total = sorted.size() + infinite_values;
    if (total == 0) {
        finish(os, path);
        return;
    }
    auto count_above = [&](double x) {
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
        return static_cast<std::size_t>(sorted.end() - it) + infinite_values;
    };
    os << format_days(0.0) << ',' << count_above(0.0) << '\n';
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
        if (sorted[i] == 0.0) continue;  // already covered by the x=0 row
        os << format_days(sorted[i]) << ',' << count_above(sorted[i]) << '\n';
    }
    finish(os, path);
}

void write_false_positives_csv(const std::string& path,
                               const std::vector<FalsePositiveReport>& reports,
                               const EntityTable& table) {
    auto os = open_out(path);
    os << "node,threshold,refreshes,intervals,max_interval_days\n";
    for (const FalsePositiveReport& r : reports) {
        os << table.name(r.node) << ',' << r.threshold << ',' << r.refreshes << ','
           << r.intervals.size() << ',' << format_days(r.max_interval_days) << '\n';
    }
    finish(os, path);
}

}  // namespace clonesim
