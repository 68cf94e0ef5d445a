#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "clonesim/pipeline.hpp"
#include "clonesim/simulator.hpp"
#include "clonesim/synth.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace clonesim;

namespace {

struct SimWorld {
    std::shared_ptr<EntityTable> table = std::make_shared<EntityTable>();
    EntityId node(const std::string& name) { return table->intern(name, EntityKind::MobileNode); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("a scripted three-node insider attack is detected at the second replica meeting") {
    SimWorld w;
    auto member = w.node("m");
    auto victim = w.node("v");
    auto donor = w.node("d");

    const Timestamp t0 = 2 * kSecondsPerDay;
    const Timestamp t1 = t0 + 3600;          // member meets the clone (donor's contact)
    const Timestamp t2 = t0 + 2 * 3600;      // member meets the victim -> detection
    std::vector<ContactEvent> events{
        make_contact(member, victim, 100, 200),  // pre-attack state
        make_contact(member, donor, t1, t1 + 60),
        make_contact(member, victim, t2, t2 + 60),
    };
    auto evaluation = ContactTrace::from_events(std::move(events), w.table,
                                                TimeSpan{0, 7 * kSecondsPerDay});

    std::vector<Community> communities{{{member, victim, donor}}};
    CommunityIndex index(communities);
    WorldKeys world = make_world_keys(*w.table, 9);

    AttackScenario scenario;
    scenario.victim = victim;
    scenario.donor = donor;
    scenario.t0 = t0;

    auto report = run_insider_scenario(evaluation, index, scenario, *w.table, world, 9);
    CHECK(report.outcome == DetectionOutcome::DetectedByMarks);
    REQUIRE(report.detector.has_value());
    CHECK(*report.detector == member);
    CHECK(*report.t_detect == t2);
    CHECK(report.latency_days ==
          doctest::Approx(static_cast<double>(t2 - t0) / kSecondsPerDay));

    SUBCASE("a clone that never meets the community stays undetected") {
        AttackScenario lonely = scenario;
        lonely.t0 = t2 + 3600;  // after every remaining contact
        auto r = run_insider_scenario(evaluation, index, lonely, *w.table, world, 9);
        CHECK(r.outcome == DetectionOutcome::NotDetected);
    }
    SUBCASE("a check-refusing clone evades marks detection") {
        AttackScenario refusing = scenario;
        refusing.clone_refuses_checks = true;
        auto r = run_insider_scenario(evaluation, index, refusing, *w.table, world, 9);
        CHECK(r.outcome == DetectionOutcome::NotDetected);
    }
}

TEST_CASE("protocol-level detection equals the meeting-order oracle on random scenarios") {
    SynthConfig cfg;
    cfg.nodes = 24;
    cfg.community_size = 6;
    cfg.p_intra = 0.4;
    cfg.p_inter = 0.01;
    cfg.weeks = 3;
    cfg.seed = 2211;
    ContactTrace trace = generate(cfg);
    auto table = std::const_pointer_cast<EntityTable>(trace.table_ptr());
    TraceSplit s = split(trace, 0.25);

    SocialGraph g = build_social_graph(s.training, 3);
    auto communities = k_clique_communities(g, 3);
    CommunityIndex index(communities);
    REQUIRE_FALSE(index.nodes().empty());

    WorldKeys world = make_world_keys(*table, 5);
    std::mt19937_64 rng(31337);
    const auto day_starts = evaluation_day_starts(s.evaluation.span());

    int detected = 0;
    for (int iter = 0; iter < 120; ++iter) {
        auto victims = index.nodes();
        EntityId victim = victims[rng() % victims.size()];
        const auto& donors = index.neighbors_of(victim);
        EntityId donor = donors[rng() % donors.size()];
        AttackScenario scenario;
        scenario.victim = victim;
        scenario.donor = donor;
        scenario.t0 = day_starts[rng() % day_starts.size()];

        auto report = run_insider_scenario(s.evaluation, index, scenario, *table, world, 5);
        auto oracle = oracles::insider_detection_by_order(s.evaluation, victim, donor, scenario.t0,
                                                          index.neighbors_of(victim));
        REQUIRE((report.outcome == DetectionOutcome::DetectedByMarks) == oracle.detected);
        if (oracle.detected) {
            ++detected;
            CHECK(*report.t_detect == oracle.t_detect);
            CHECK(report.detector->value == oracle.detector);
        }
    }
    CHECK(detected > 0);  // the config must actually exercise detection
}

TEST_CASE("insider detection latency never grows when contacts are added") {
    SimWorld w;
    auto member = w.node("m");
    auto victim = w.node("v");
    auto donor = w.node("d");
    const Timestamp t0 = kSecondsPerDay;

    std::vector<ContactEvent> base{
        make_contact(member, donor, t0 + 5000, t0 + 5100),
        make_contact(member, victim, t0 + 9000, t0 + 9100),
    };
    std::vector<Community> communities{{{member, victim, donor}}};
    CommunityIndex index(communities);
    WorldKeys world = make_world_keys(*w.table, 3);

    AttackScenario scenario;
    scenario.victim = victim;
    scenario.donor = donor;
    scenario.t0 = t0;

    auto eval1 = ContactTrace::from_events(base, w.table, TimeSpan{0, 3 * kSecondsPerDay});
    auto r1 = run_insider_scenario(eval1, index, scenario, *w.table, world, 3);
    REQUIRE(r1.outcome == DetectionOutcome::DetectedByMarks);

    // an extra victim meeting between the two events can only detect sooner
    base.push_back(make_contact(member, victim, t0 + 7000, t0 + 7050));
    auto eval2 = ContactTrace::from_events(base, w.table, TimeSpan{0, 3 * kSecondsPerDay});
    auto r2 = run_insider_scenario(eval2, index, scenario, *w.table, world, 3);
    REQUIRE(r2.outcome == DetectionOutcome::DetectedByMarks);
    CHECK(r2.latency_days <= r1.latency_days);
}

TEST_CASE("experiment runs are deterministic and exhaustive") {
    SynthConfig cfg;
    cfg.nodes = 15;
    cfg.community_size = 5;
    cfg.p_intra = 0.5;
    cfg.p_inter = 0.0;
    cfg.weeks = 2;
    cfg.seed = 14;
    ContactTrace trace = generate(cfg);
    auto table = std::const_pointer_cast<EntityTable>(trace.table_ptr());
    TraceSplit s = split(trace, 0.25);
    auto communities = k_clique_communities(build_social_graph(s.training, 2), 3);

    SimulationConfig config;
    config.seed = 4;
    config.min_days = 2;
    config.threads = 2;

    auto r1 = run_insider_experiment(s, communities, config, *table);
    auto r2 = run_insider_experiment(s, communities, config, *table);
    REQUIRE(r1.size() == r2.size());
    CHECK(r1.size() > 0);
    for (std::size_t i = 0; i < r1.size(); ++i) {
        CHECK(r1[i].scenario.victim == r2[i].scenario.victim);
        CHECK(r1[i].scenario.donor == r2[i].scenario.donor);
        CHECK(r1[i].scenario.t0 == r2[i].scenario.t0);
        CHECK(r1[i].outcome == r2[i].outcome);
        CHECK(r1[i].latency_days == r2[i].latency_days);
    }
    // one report per (victim, donor) pair under the default single sample
    CommunityIndex index(communities);
    std::size_t expected = 0;
    for (EntityId v : index.nodes()) expected += index.neighbors_of(v).size();
    CHECK(r1.size() == expected);

    SUBCASE("every-day sampling enumerates all evaluation day starts") {
        SimulationConfig every = config;
        every.attack_sampling.policy = AttackSampling::Policy::EveryDayStart;
        auto r3 = run_insider_experiment(s, communities, every, *table);
        const auto days = evaluation_day_starts(s.evaluation.span()).size();
        CHECK(r3.size() == expected * days);
    }
}

namespace {

struct OutsiderWorld {
    std::shared_ptr<EntityTable> table = std::make_shared<EntityTable>();
    std::vector<EntityId> ids;
    WorldKeys world;
    Authority authority;

    explicit OutsiderWorld(int n, std::uint64_t seed = 21)
        : world((fill(*table, ids, n), make_world_keys(*table, seed))),
          authority(world.make_authority()) {}

    static void fill(EntityTable& t, std::vector<EntityId>& ids, int n) {
        for (int i = 0; i < n; ++i)
            ids.push_back(t.intern("o" + std::to_string(i), EntityKind::MobileNode));
    }
};

}  // namespace

TEST_CASE("closed-form certificate duration equals step-by-step validity replay") {
    OutsiderWorld w(8);
    std::mt19937_64 rng(606);

    for (int iter = 0; iter < 200; ++iter) {
        const int n = 1 + static_cast<int>(rng() % 6);
        const Timestamp issue = 0;
        const Timestamp eval_end = 30 * kSecondsPerDay;

        CommunityCertificate cert;
        cert.owner = w.ids[0];
        for (int i = 0; i < n; ++i) cert.friends.push_back(w.ids[static_cast<std::size_t>(i + 1)]);
        for (int i = 0; i < n; ++i)
            cert.windows.push_back(static_cast<Seconds>(1 + rng() % 6) * kSecondsPerDay);
        cert.threshold = 1 + static_cast<int>(rng() % n);
        cert.ca_sig = w.authority.sign(
            certificate_payload(cert.owner, cert.friends, cert.windows, cert.threshold));
        for (int i = 0; i < n; ++i) {
            SignedUpdate seed;
            seed.signer = w.authority.id();
            seed.t = issue;
            seed.sig = w.authority.sign(update_payload(cert.owner, issue));
            cert.updates[cert.friends[static_cast<std::size_t>(i)]] = seed;
        }

        // honest whole-day refreshes, then the attack at a whole-day t0
        std::vector<std::pair<Timestamp, int>> timeline;
        const int refreshes = static_cast<int>(rng() % 12);
        for (int i = 0; i < refreshes; ++i)
            timeline.emplace_back(static_cast<Timestamp>(1 + rng() % 14) * kSecondsPerDay,
                                  static_cast<int>(rng() % n));
        std::sort(timeline.begin(), timeline.end());
        const Timestamp t0 = static_cast<Timestamp>(rng() % 16) * kSecondsPerDay;

        for (const auto& [t, idx] : timeline) {
            if (t > t0) break;
            refresh_on_meeting(cert, cert.friends[static_cast<std::size_t>(idx)], t,
                               w.world.scheme, w.world.keys);
        }

        const Seconds closed = remaining_validity(
            expiries_at(cert.windows, issue, timeline, t0), cert.threshold, t0);

        // oracle: walk forward one day at a time until is_valid flips; with
        // whole-day quantities the first invalid day IS the expiry instant
        Timestamp t = t0;
        while (is_valid(cert, t, w.world.scheme, w.world.directory, w.authority)) {
            t += kSecondsPerDay;
            REQUIRE(t < eval_end + 40 * kSecondsPerDay);
        }
        CHECK(t - t0 == closed);
    }
}

TEST_CASE("false-positive intervals match a dense validity scan") {
    OutsiderWorld w(5);
    std::mt19937_64 rng(515);
    for (int iter = 0; iter < 60; ++iter) {
        const int n = 1 + static_cast<int>(rng() % 4);
        const Timestamp issue = 0;
        const Timestamp eval_end = 10 * kSecondsPerDay;
        std::vector<Seconds> windows;
        for (int i = 0; i < n; ++i)
            windows.push_back(static_cast<Seconds>(1 + rng() % 3) * kSecondsPerDay / 2);
        std::vector<std::pair<Timestamp, int>> timeline;
        const int refreshes = 1 + static_cast<int>(rng() % 10);
        for (int i = 0; i < refreshes; ++i)
            timeline.emplace_back(static_cast<Timestamp>(rng() % (8 * kSecondsPerDay)),
                                  static_cast<int>(rng() % n));
        std::sort(timeline.begin(), timeline.end());
        const int threshold = 1 + static_cast<int>(rng() % n);

        auto intervals = invalid_intervals(windows, issue, timeline, threshold, eval_end);

        // dense scan at 20-minute steps (all quantities are multiples of it)
        const Seconds step = 1200;
        Seconds max_window = 0;
        for (Seconds win : windows) max_window = std::max(max_window, win);
        auto fresh_at = [&](Timestamp t) {
            std::vector<Timestamp> expiry(windows.size(), issue + max_window);
            for (const auto& [rt, idx] : timeline)
                if (rt <= t) expiry[static_cast<std::size_t>(idx)] =
                        rt + windows[static_cast<std::size_t>(idx)];
            int c = 0;
            for (Timestamp e : expiry)
                if (e > t) ++c;
            return c;
        };
        const Timestamp first = timeline.front().first;
        for (Timestamp t = first; t <= eval_end; t += step) {
            bool in_interval = false;
            for (const auto& [lo, hi] : intervals) {
                // intervals are [lo, hi); one clipped at eval_end stays open
                if ((t >= lo && t < hi) || (t == hi && hi == eval_end)) in_interval = true;
            }
            CHECK(in_interval == (fresh_at(t) < threshold));
        }
    }
}

TEST_CASE("false-positive experiment finds constructed gaps") {
    OutsiderWorld w(4);
    auto owner = w.ids[0];
    auto friend1 = w.ids[1];

    std::vector<ContactEvent> events;
    // training: meet on days 0..6 -> window one day
    for (int d = 0; d < 7; ++d)
        events.push_back(make_contact(owner, friend1, d * kSecondsPerDay + 10,
                                      d * kSecondsPerDay + 20));
    // evaluation: daily meetings except a three-day hole at days 10-12
    for (int d = 7; d < 28; ++d) {
        if (d >= 10 && d <= 12) continue;
        events.push_back(make_contact(owner, friend1, d * kSecondsPerDay + 10,
                                      d * kSecondsPerDay + 20));
    }
    auto trace = ContactTrace::from_events(std::move(events), w.table,
                                           TimeSpan{0, 28 * kSecondsPerDay});
    TraceSplit s = split(trace, 0.25);

    auto cert = issue_certificate(w.authority, owner, s.training, CandidateKinds::NodesOnly,
                                  FixedThreshold{1});
    auto reports = run_false_positive_experiment(s, {cert});
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].threshold == 1);
    REQUIRE(reports[0].intervals.size() == 1);
    // hole: last refresh day 9 expires day 10 (+10s), next refresh day 13
    CHECK(reports[0].intervals[0].first == 10 * kSecondsPerDay + 10);
    CHECK(reports[0].intervals[0].second == 13 * kSecondsPerDay + 10);
    CHECK(reports[0].max_interval_days == doctest::Approx(3.0));

    SUBCASE("meeting a friend inside every window keeps the node clean") {
        OutsiderWorld w2(3);
        auto o2 = w2.ids[0];
        auto f2 = w2.ids[1];
        std::vector<ContactEvent> ev2;
        for (int d = 0; d < 28; ++d)
            ev2.push_back(make_contact(o2, f2, d * kSecondsPerDay + 10, d * kSecondsPerDay + 20));
        auto t2 = ContactTrace::from_events(std::move(ev2), w2.table,
                                            TimeSpan{0, 28 * kSecondsPerDay});
        TraceSplit s2 = split(t2, 0.25);
        auto cert2 = issue_certificate(w2.authority, o2, s2.training, CandidateKinds::NodesOnly,
                                       FixedThreshold{1});
        auto clean = run_false_positive_experiment(s2, {cert2});
        REQUIRE(clean.size() == 1);
        CHECK(clean[0].intervals.empty());
    }
}

TEST_CASE("report files: scenarios, per-node averages, CCDF") {
    SimWorld w;
    auto a = w.node("a");
    auto b = w.node("b");

    SUBCASE("empty reports produce header-only files") {
        const std::string path = temp_file("clonesim_empty.csv");
        write_scenarios_csv(path, {}, *w.table);
        CHECK(slurp(path) == "victim,donor,kind,t0,outcome,latency_days\n");
        const std::string ccdf = temp_file("clonesim_empty_ccdf.csv");
        write_ccdf_csv(ccdf, {});
        CHECK(slurp(ccdf) == "x_days,node_count\n");
        std::remove(path.c_str());
        std::remove(ccdf.c_str());
    }
    SUBCASE("CCDF starts at the node count and never increases") {
        const std::string path = temp_file("clonesim_ccdf.csv");
        write_ccdf_csv(path, {0.5, 1.5, 1.5, 3.0}, 1);  // one never-detected node
        auto text = slurp(path);
        std::istringstream is(text);
        std::string line;
        std::getline(is, line);
        CHECK(line == "x_days,node_count");
        std::size_t prev = SIZE_MAX;
        bool first = true;
        while (std::getline(is, line)) {
            auto comma = line.find(',');
            double x = std::stod(line.substr(0, comma));
            std::size_t count = std::stoul(line.substr(comma + 1));
            if (first) {
                CHECK(x == 0.0);
                CHECK(count == 5);  // everything is above zero
                first = false;
            }
            CHECK(count <= prev);
            prev = count;
        }
        CHECK(prev == 1);  // the unresolved node never drops out
        std::remove(path.c_str());
    }
    SUBCASE("scenario rows carry names, outcome and latency") {
        DetectionReport r;
        r.scenario.victim = a;
        r.scenario.donor = b;
        r.scenario.t0 = 86400;
        r.outcome = DetectionOutcome::DetectedByMarks;
        r.detector = b;
        r.t_detect = 90000;
        r.latency_days = 0.5;
        DetectionReport miss;
        miss.scenario.victim = a;
        miss.scenario.donor = b;
        miss.scenario.t0 = 2 * 86400;
        miss.outcome = DetectionOutcome::NotDetected;

        const std::string path = temp_file("clonesim_scen.csv");
        write_scenarios_csv(path, {r, miss}, *w.table);
        auto text = slurp(path);
        CHECK(text.find("a,b,insider,86400,detected-by-marks,0.500000\n") != std::string::npos);
        CHECK(text.find("a,b,insider,172800,not-detected,\n") != std::string::npos);
        std::remove(path.c_str());

        auto averages = per_victim_averages({r, miss});
        REQUIRE(averages.size() == 1);
        CHECK(averages[0].scenarios == 2);
        CHECK(averages[0].unresolved == 1);
        CHECK(averages[0].average_days == doctest::Approx(0.5));
    }
}
