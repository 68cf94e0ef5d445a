#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clonesim/certs.hpp"
#include "clonesim/community.hpp"
#include "clonesim/marks.hpp"
#include "clonesim/trace.hpp"

namespace clonesim {

enum class AdversaryKind : std::uint8_t { Insider, Outsider };

const char* to_string(AdversaryKind kind);

// One attack instance: the victim's identity is cloned at t0 and the clone
// moves with the mobility donor from then on. Insider donors come from the
// victim's community; the outsider model reduces to a clone that never meets
// the victim's friends.
struct AttackScenario {
    EntityId victim;
    EntityId donor;
    Timestamp t0 = 0;
    AdversaryKind kind = AdversaryKind::Insider;
    bool clone_refuses_checks = false;
};

enum class DetectionOutcome : std::uint8_t { DetectedByMarks, CertificateExpired, NotDetected };

const char* to_string(DetectionOutcome outcome);

struct DetectionReport {
    AttackScenario scenario;
    DetectionOutcome outcome = DetectionOutcome::NotDetected;
    std::optional<EntityId> detector;
    std::optional<Timestamp> t_detect;
    double latency_days = 0.0;  // detection latency or certificate duration
};

struct AttackSampling {
    enum class Policy : std::uint8_t { EveryDayStart, SampledDayStarts };
    Policy policy = Policy::SampledDayStarts;
    int samples_per_target = 1;
};

struct SimulationConfig {
    double split_fraction = 0.25;
    int kclique_k = 3;
    int min_days = 3;
    CandidateKinds candidate_kinds = CandidateKinds::NodesOnly;
    std::uint64_t seed = 1;
    AttackSampling attack_sampling;
    int threads = 0;  // 0 = hardware concurrency

    void validate() const;
};

// Candidate attack instants: starts of evaluation days.
std::vector<Timestamp> evaluation_day_starts(const TimeSpan& evaluation);

// Protocol-level replay of one insider scenario over the evaluation trace:
// marks are exchanged from the evaluation start, the victim's state is
// forked into the clone at t0, and both replicas then run the meeting
// protocol with the victim's community members (the donor itself, being the
// adversary, never reports). Detection is the first failed check.
DetectionReport run_insider_scenario(const NodeEventIndex& events, const CommunityIndex& index,
                                     const AttackScenario& scenario, const EntityTable& table,
                                     const WorldKeys& world, std::uint64_t seed);
DetectionReport run_insider_scenario(const ContactTrace& evaluation, const CommunityIndex& index,
                                     const AttackScenario& scenario, const EntityTable& table,
                                     const WorldKeys& world, std::uint64_t seed);

std::vector<DetectionReport> run_insider_experiment(const TraceSplit& split,
                                                    const std::vector<Community>& communities,
                                                    const SimulationConfig& config,
                                                    EntityTable& table);

// Outsider durations: honest refreshes up to t0, then the closed-form
// remaining validity of the certificate (threshold-th largest expiry).
std::vector<DetectionReport> run_outsider_experiment(const TraceSplit& split,
                                                     const std::vector<CommunityCertificate>& certs,
                                                     const SimulationConfig& config);

struct FalsePositiveReport {
    EntityId node;
    int threshold = 1;
    std::size_t refreshes = 0;
    std::vector<std::pair<Timestamp, Timestamp>> intervals;
    double max_interval_days = 0.0;
};

// Honest replay with no attack; reports the maximal intervals during which
// each node could not authenticate after its first refresh.
std::vector<FalsePositiveReport> run_false_positive_experiment(
    const TraceSplit& split, const std::vector<CommunityCertificate>& certs);

// Aggregates and file emission. The CCDF lists, for each x, how many nodes
// keep a value strictly greater than x; undetected scenarios count forever.
struct NodeAverage {
    EntityId node;
    double average_days = 0.0;  // over resolved scenarios
    std::size_t scenarios = 0;
    std::size_t unresolved = 0;  // NotDetected entries
};

std::vector<NodeAverage> per_victim_averages(const std::vector<DetectionReport>& reports);

void write_scenarios_csv(const std::string& path, const std::vector<DetectionReport>& reports,
                         const EntityTable& table);
void write_node_averages_csv(const std::string& path, const std::vector<NodeAverage>& averages,
                             const EntityTable& table);
void write_ccdf_csv(const std::string& path, const std::vector<double>& values,
                    std::size_t infinite_values = 0);
void write_false_positives_csv(const std::string& path,
                               const std::vector<FalsePositiveReport>& reports,
                               const EntityTable& table);

}  // namespace clonesim
