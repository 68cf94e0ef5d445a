#include <random>

#include "clonesim/certs.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace clonesim;

namespace {

struct CertWorld {
    std::shared_ptr<EntityTable> table = std::make_shared<EntityTable>();
    std::vector<EntityId> nodes;
    std::vector<EntityId> aps;
    WorldKeys world;
    Authority authority;

    CertWorld(int node_count, int ap_count, std::uint64_t seed = 7)
        : world((fill(*table, nodes, aps, node_count, ap_count), make_world_keys(*table, seed))),
          authority(world.make_authority()) {}

    static void fill(EntityTable& t, std::vector<EntityId>& nodes, std::vector<EntityId>& aps,
                     int node_count, int ap_count) {
        for (int i = 0; i < node_count; ++i)
            nodes.push_back(t.intern("c" + std::to_string(i), EntityKind::MobileNode));
        for (int i = 0; i < ap_count; ++i)
            aps.push_back(t.intern("AP" + std::to_string(i), EntityKind::AccessPoint));
    }
};

// owner meets a peer once within each listed day bucket
void meet_on_days(std::vector<ContactEvent>& events, EntityId owner, EntityId peer,
                  const std::vector<int>& days) {
    for (int d : days)
        events.push_back(make_contact(owner, peer, static_cast<Timestamp>(d) * kSecondsPerDay + 60,
                                      static_cast<Timestamp>(d) * kSecondsPerDay + 120));
}

}  // namespace

TEST_CASE("friend set selection by mean meeting days") {
    CertWorld w(4, 0);
    auto owner = w.nodes[0];
    std::vector<ContactEvent> events;
    meet_on_days(events, owner, w.nodes[1], {0, 1, 2, 3, 4});  // d=5
    meet_on_days(events, owner, w.nodes[2], {0});              // d=1
    meet_on_days(events, owner, w.nodes[3], {0, 2, 4});        // d=3
    auto training = ContactTrace::from_events(std::move(events), w.table,
                                              TimeSpan{0, 7 * kSecondsPerDay});

    auto fs = compute_friend_set(training, owner, CandidateKinds::NodesOnly);
    CHECK(fs == std::vector<EntityId>{w.nodes[1], w.nodes[3]});  // mean 3 keeps d >= 3
}

TEST_CASE("friend set edge cases") {
    CertWorld w(3, 1);
    auto owner = w.nodes[0];

    SUBCASE("a single candidate is always kept") {
        std::vector<ContactEvent> events;
        meet_on_days(events, owner, w.nodes[1], {2});
        auto training = ContactTrace::from_events(std::move(events), w.table,
                                                  TimeSpan{0, 7 * kSecondsPerDay});
        auto fs = compute_friend_set(training, owner, CandidateKinds::NodesOnly);
        CHECK(fs == std::vector<EntityId>{w.nodes[1]});
    }
    SUBCASE("equal counts keep everybody") {
        std::vector<ContactEvent> events;
        meet_on_days(events, owner, w.nodes[1], {0, 3});
        meet_on_days(events, owner, w.nodes[2], {1, 4});
        auto training = ContactTrace::from_events(std::move(events), w.table,
                                                  TimeSpan{0, 7 * kSecondsPerDay});
        auto fs = compute_friend_set(training, owner, CandidateKinds::NodesOnly);
        CHECK(fs.size() == 2);
    }
    SUBCASE("no candidates of the allowed kind") {
        std::vector<ContactEvent> events;
        meet_on_days(events, owner, w.nodes[1], {0});
        auto training = ContactTrace::from_events(std::move(events), w.table,
                                                  TimeSpan{0, 7 * kSecondsPerDay});
        CHECK_THROWS_AS(compute_friend_set(training, owner, CandidateKinds::AccessPointsOnly),
                        EmptyFriendSet);
    }
    SUBCASE("access points qualify when allowed") {
        std::vector<ContactEvent> events;
        meet_on_days(events, owner, w.aps[0], {0, 1, 2});
        meet_on_days(events, owner, w.nodes[1], {0});
        auto training = ContactTrace::from_events(std::move(events), w.table,
                                                  TimeSpan{0, 7 * kSecondsPerDay});
        auto only_ap = compute_friend_set(training, owner, CandidateKinds::AccessPointsOnly);
        CHECK(only_ap == std::vector<EntityId>{w.aps[0]});
        auto both = compute_friend_set(training, owner, CandidateKinds::Both);
        CHECK(both == std::vector<EntityId>{w.aps[0]});  // mean 2 drops the single-day node
    }
}

TEST_CASE("freshness windows from training gaps") {
    CertWorld w(3, 0);
    auto owner = w.nodes[0];
    std::vector<ContactEvent> events;
    meet_on_days(events, owner, w.nodes[1], {1, 3, 7});  // gaps 2 and 4 -> 3 days
    meet_on_days(events, owner, w.nodes[2], {4});        // single day -> training length
    auto training = ContactTrace::from_events(std::move(events), w.table,
                                              TimeSpan{0, 10 * kSecondsPerDay});

    auto windows =
        compute_freshness_windows(training, owner, {w.nodes[1], w.nodes[2]});
    CHECK(windows[0] == 3 * kSecondsPerDay);
    CHECK(windows[1] == 10 * kSecondsPerDay);

    std::vector<ContactEvent> daily;
    meet_on_days(daily, owner, w.nodes[1], {0, 1, 2, 3, 4, 5, 6});
    auto t2 = ContactTrace::from_events(std::move(daily), w.table,
                                        TimeSpan{0, 7 * kSecondsPerDay});
    CHECK(compute_freshness_windows(t2, owner, {w.nodes[1]})[0] == kSecondsPerDay);
}

TEST_CASE("freshness predicate is strict") {
    SignedUpdate u;
    u.t = 10 * kSecondsPerDay;
    CHECK(is_fresh(u, 3 * kSecondsPerDay, 12 * kSecondsPerDay));        // 12 < 13
    CHECK_FALSE(is_fresh(u, 3 * kSecondsPerDay, 13 * kSecondsPerDay));  // boundary
    CHECK_FALSE(is_fresh(u, 0, u.t));
    CHECK_FALSE(is_fresh(u, 0, u.t + 1));
}

namespace {

// Build a signed certificate directly, with the given update timestamps.
CommunityCertificate build_cert(CertWorld& w, EntityId owner, std::vector<EntityId> friends,
                                std::vector<Seconds> windows, int threshold,
                                const std::vector<Timestamp>& update_times) {
    CommunityCertificate cert;
    cert.owner = owner;
    cert.friends = std::move(friends);
    cert.windows = std::move(windows);
    cert.threshold = threshold;
    cert.ca_sig = w.authority.sign(
        certificate_payload(cert.owner, cert.friends, cert.windows, cert.threshold));
    for (std::size_t i = 0; i < update_times.size(); ++i) {
        SignedUpdate u;
        u.signer = cert.friends[i];
        u.t = update_times[i];
        u.sig = w.world.scheme.sign(u.signer, w.world.keys.get(u.signer).sec,
                                    update_payload(cert.owner, u.t));
        cert.updates[cert.friends[i]] = u;
    }
    return cert;
}

}  // namespace

TEST_CASE("certificate validity counts fresh verified updates") {
    CertWorld w(5, 0);
    auto owner = w.nodes[0];
    std::vector<EntityId> friends{w.nodes[1], w.nodes[2], w.nodes[3]};
    std::vector<Seconds> windows{2 * kSecondsPerDay, 2 * kSecondsPerDay, 2 * kSecondsPerDay};

    const Timestamp now = 10 * kSecondsPerDay;
    SUBCASE("fresh, fresh, stale meets a threshold of 2") {
        auto cert = build_cert(w, owner, friends, windows, 2,
                               {now - kSecondsPerDay, now - kSecondsPerDay, now - 3 * kSecondsPerDay});
        CHECK(is_valid(cert, now, w.world.scheme, w.world.directory, w.authority));
    }
    SUBCASE("fresh, stale, stale does not") {
        auto cert = build_cert(w, owner, friends, windows, 2,
                               {now - kSecondsPerDay, now - 3 * kSecondsPerDay,
                                now - 3 * kSecondsPerDay});
        CHECK_FALSE(is_valid(cert, now, w.world.scheme, w.world.directory, w.authority));
    }
    SUBCASE("a broken authority signature is an error, not staleness") {
        auto cert = build_cert(w, owner, friends, windows, 2,
                               {now, now, now});
        cert.ca_sig.tag_hi ^= 1;
        CHECK_THROWS_AS(is_valid(cert, now, w.world.scheme, w.world.directory, w.authority),
                        CertificateFormatError);
    }
    SUBCASE("randomized update sets match the brute-force count") {
        std::mt19937_64 rng(2025);
        for (int iter = 0; iter < 200; ++iter) {
            std::vector<Timestamp> times;
            std::vector<Seconds> win;
            for (int i = 0; i < 3; ++i) {
                times.push_back(now - static_cast<Timestamp>(rng() % (5 * kSecondsPerDay)));
                win.push_back(static_cast<Seconds>(1 + rng() % (4 * kSecondsPerDay)));
            }
            const int threshold = 1 + static_cast<int>(rng() % 3);
            auto cert = build_cert(w, owner, friends, win, threshold, times);
            const bool got = is_valid(cert, now, w.world.scheme, w.world.directory, w.authority);
            CHECK(got == (oracles::fresh_count_bruteforce(cert, now) >= threshold));
        }
    }
    SUBCASE("an update with a bad signature never counts") {
        auto cert = build_cert(w, owner, friends, windows, 1,
                               {now, now - 5 * kSecondsPerDay, now - 5 * kSecondsPerDay});
        cert.updates[friends[0]].sig.tag_lo ^= 1;
        CHECK_FALSE(is_valid(cert, now, w.world.scheme, w.world.directory, w.authority));
    }
}

TEST_CASE("meeting a friend refreshes the update; strangers never do") {
    CertWorld w(4, 0);
    auto owner = w.nodes[0];
    auto cert = build_cert(w, owner, {w.nodes[1], w.nodes[2]},
                           {2 * kSecondsPerDay, 2 * kSecondsPerDay}, 1, {0, 0});

    refresh_on_meeting(cert, w.nodes[1], 12 * kSecondsPerDay, w.world.scheme, w.world.keys);
    CHECK(cert.updates.at(w.nodes[1]).t == 12 * kSecondsPerDay);
    CHECK(cert.updates.at(w.nodes[2]).t == 0);

    auto before = cert.updates;
    refresh_on_meeting(cert, w.nodes[3], 13 * kSecondsPerDay, w.world.scheme, w.world.keys);
    CHECK(cert.updates.at(w.nodes[1]).t == before.at(w.nodes[1]).t);
    CHECK(cert.updates.size() == before.size());

    refresh_on_meeting(cert, w.nodes[1], 14 * kSecondsPerDay, w.world.scheme, w.world.keys);
    CHECK(cert.updates.at(w.nodes[1]).t == 14 * kSecondsPerDay);
    // an out-of-order lower timestamp never wins
    refresh_on_meeting(cert, w.nodes[1], 13 * kSecondsPerDay, w.world.scheme, w.world.keys);
    CHECK(cert.updates.at(w.nodes[1]).t == 14 * kSecondsPerDay);
}

TEST_CASE("threshold selection by honest replay") {
    SUBCASE("five friends met daily with two-day windows keep all five fresh") {
        std::vector<Seconds> windows(5, 2 * kSecondsPerDay);
        std::vector<std::pair<Timestamp, int>> timeline;
        const Timestamp issue = 0;
        for (int d = 0; d < 14; ++d)
            for (int f = 0; f < 5; ++f)
                timeline.emplace_back(static_cast<Timestamp>(d) * kSecondsPerDay + 3600, f);
        std::sort(timeline.begin(), timeline.end());
        auto sel = select_threshold(windows, issue, timeline, 14 * kSecondsPerDay);
        CHECK(sel.threshold == 5);
        CHECK_FALSE(sel.flagged);
    }
    SUBCASE("one friend met weekly with a seven-day window yields one") {
        std::vector<Seconds> windows{7 * kSecondsPerDay};
        std::vector<std::pair<Timestamp, int>> timeline;
        for (int meeting = 0; meeting < 4; ++meeting)
            timeline.emplace_back(static_cast<Timestamp>(meeting) * 7 * kSecondsPerDay, 0);
        auto sel = select_threshold(windows, 0, timeline, 28 * kSecondsPerDay);
        CHECK(sel.threshold == 1);
        CHECK_FALSE(sel.flagged);
    }
    SUBCASE("a hole longer than every window flags the node") {
        std::vector<Seconds> windows{kSecondsPerDay, kSecondsPerDay};
        std::vector<std::pair<Timestamp, int>> timeline{
            {1 * kSecondsPerDay, 0}, {1 * kSecondsPerDay, 1}, {10 * kSecondsPerDay, 0}};
        auto sel = select_threshold(windows, 0, timeline, 12 * kSecondsPerDay);
        CHECK(sel.threshold == 1);
        CHECK(sel.flagged);
    }
    SUBCASE("no-refresh replay is vacuously clean at full size") {
        std::vector<Seconds> windows{kSecondsPerDay, kSecondsPerDay};
        auto sel = select_threshold(windows, 0, {}, 12 * kSecondsPerDay);
        CHECK(sel.threshold == 2);
    }
}

TEST_CASE("selected threshold is the largest with a clean replay") {
    // randomized cross-check between the min-count selection and the
    // interval scanner: k = select -> no intervals, k+1 -> some interval
    std::mt19937_64 rng(990);
    for (int iter = 0; iter < 150; ++iter) {
        const int n = 1 + static_cast<int>(rng() % 6);
        std::vector<Seconds> windows;
        for (int i = 0; i < n; ++i)
            windows.push_back(static_cast<Seconds>(1 + rng() % 5) * kSecondsPerDay);
        std::vector<std::pair<Timestamp, int>> timeline;
        const int refreshes = 1 + static_cast<int>(rng() % 25);
        for (int i = 0; i < refreshes; ++i)
            timeline.emplace_back(static_cast<Timestamp>(rng() % (20 * kSecondsPerDay)),
                                  static_cast<int>(rng() % n));
        std::sort(timeline.begin(), timeline.end());
        const Timestamp eval_end = 21 * kSecondsPerDay;

        auto sel = select_threshold(windows, 0, timeline, eval_end);
        auto at_k = invalid_intervals(windows, 0, timeline, sel.threshold, eval_end);
        if (!sel.flagged) CHECK(at_k.empty());
        else CHECK_FALSE(at_k.empty());
        if (sel.threshold < n) {
            auto above = invalid_intervals(windows, 0, timeline, sel.threshold + 1, eval_end);
            CHECK_FALSE(above.empty());
        }
        // validity at threshold k implies validity at k-1
        if (sel.threshold > 1 && !sel.flagged)
            CHECK(invalid_intervals(windows, 0, timeline, sel.threshold - 1, eval_end).empty());
    }
}

TEST_CASE("issued certificates are immediately valid and reproducible") {
    CertWorld w(6, 0);
    auto owner = w.nodes[0];
    std::vector<ContactEvent> events;
    meet_on_days(events, owner, w.nodes[1], {0, 1, 2, 3});
    meet_on_days(events, owner, w.nodes[2], {0, 2});
    meet_on_days(events, owner, w.nodes[3], {1});
    // evaluation period: daily contact with the strongest friend
    std::vector<int> eval_days;
    for (int d = 7; d < 28; ++d) eval_days.push_back(d);
    meet_on_days(events, owner, w.nodes[1], eval_days);
    auto trace = ContactTrace::from_events(std::move(events), w.table,
                                           TimeSpan{0, 28 * kSecondsPerDay});
    TraceSplit s = split(trace, 0.25);

    auto cert = issue_certificate(w.authority, owner, s.training, CandidateKinds::NodesOnly,
                                  ReplayThreshold{&s.evaluation});
    CHECK(cert.friends == compute_friend_set(s.training, owner, CandidateKinds::NodesOnly));
    CHECK(cert.windows == compute_freshness_windows(s.training, owner, cert.friends));
    CHECK(is_valid(cert, s.boundary + 1, w.world.scheme, w.world.directory, w.authority));

    // replay at the chosen threshold is clean end to end
    auto timeline = refresh_timeline(s.evaluation, owner, cert.friends);
    CHECK(invalid_intervals(cert.windows, s.boundary, timeline, cert.threshold,
                            s.evaluation.span().end)
              .empty());

    SUBCASE("issuance is refused without any candidate") {
        CHECK_THROWS_AS(issue_certificate(w.authority, w.nodes[5], s.training,
                                          CandidateKinds::NodesOnly, FixedThreshold{1}),
                        EmptyFriendSet);
    }
}

TEST_CASE("authentication protocol outcomes") {
    CertWorld w(5, 0);
    auto owner = w.nodes[0];
    std::vector<EntityId> friends{w.nodes[1], w.nodes[2]};
    std::vector<Seconds> windows{2 * kSecondsPerDay, 2 * kSecondsPerDay};
    const Timestamp now = 5 * kSecondsPerDay;

    SUBCASE("a valid fresh certificate is accepted") {
        auto cert = build_cert(w, owner, friends, windows, 1, {now - 100, now - 100});
        CHECK(authenticate(cert, now, w.world.scheme, w.world.directory, w.authority).ok);
    }
    SUBCASE("a revoked owner is denied") {
        auto cert = build_cert(w, owner, friends, windows, 1, {now - 100, now - 100});
        Revocation rev;
        rev.revoked = owner;
        rev.time = now - 1;
        rev.evidence_kind = "conflicting-marks";
        w.authority.record_revocation(rev);
        auto r = authenticate(cert, now, w.world.scheme, w.world.directory, w.authority);
        CHECK_FALSE(r.ok);
        CHECK(r.reason == "owner is revoked");
    }
    SUBCASE("a stale certificate is denied") {
        auto cert = build_cert(w, owner, friends, windows, 2,
                               {now - 100, now - 3 * kSecondsPerDay});
        auto r = authenticate(cert, now, w.world.scheme, w.world.directory, w.authority);
        CHECK_FALSE(r.ok);
        CHECK(r.reason == "too few fresh updates");
    }
    SUBCASE("malformed certificates carry a diagnostic") {
        auto cert = build_cert(w, owner, friends, windows, 1, {now, now});
        cert.windows.pop_back();
        auto r = authenticate(cert, now, w.world.scheme, w.world.directory, w.authority);
        CHECK_FALSE(r.ok);
        CHECK(r.reason.find("malformed") != std::string::npos);
    }
    SUBCASE("a tampered authority signature is denied") {
        auto cert = build_cert(w, owner, friends, windows, 1, {now, now});
        cert.ca_sig.tag_lo ^= 2;
        auto r = authenticate(cert, now, w.world.scheme, w.world.directory, w.authority);
        CHECK_FALSE(r.ok);
        CHECK(r.reason == "authority signature does not verify");
    }
}

TEST_CASE("freshness is monotone in time for a fixed update set") {
    CertWorld w(4, 0);
    auto cert = build_cert(w, w.nodes[0], {w.nodes[1], w.nodes[2]},
                           {3 * kSecondsPerDay, 5 * kSecondsPerDay}, 1,
                           {2 * kSecondsPerDay, 4 * kSecondsPerDay});
    std::mt19937_64 rng(15);
    for (int iter = 0; iter < 100; ++iter) {
        Timestamp t1 = static_cast<Timestamp>(rng() % (12 * kSecondsPerDay));
        Timestamp t2 = t1 + static_cast<Timestamp>(rng() % (3 * kSecondsPerDay));
        const int c1 = oracles::fresh_count_bruteforce(cert, t1);
        const int c2 = oracles::fresh_count_bruteforce(cert, t2);
        CHECK(c1 >= c2);
    }
}

TEST_CASE("closed-form remaining validity") {
    std::vector<Timestamp> expiries{1 * kSecondsPerDay, 3 * kSecondsPerDay, 5 * kSecondsPerDay};
    const Timestamp t0 = 0;
    CHECK(remaining_validity(expiries, 2, t0) == 3 * kSecondsPerDay);
    CHECK(remaining_validity(expiries, 1, t0) == 5 * kSecondsPerDay);
    CHECK(remaining_validity(expiries, 3, t0) == 1 * kSecondsPerDay);
    CHECK(remaining_validity(expiries, 1, 6 * kSecondsPerDay) == 0);  // already expired
    CHECK_THROWS_AS(remaining_validity(expiries, 4, t0), ConfigError);
}

TEST_CASE("certificate JSON export names entities") {
    CertWorld w(3, 0);
    auto cert = build_cert(w, w.nodes[0], {w.nodes[1]}, {kSecondsPerDay}, 1, {100});
    auto json = certificate_to_json(cert, *w.table);
    CHECK(json.find("\"owner\": \"c0\"") != std::string::npos);
    CHECK(json.find("\"c1\"") != std::string::npos);
}
