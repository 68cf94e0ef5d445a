#include "clonesim/certs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

namespace clonesim {

bool allows(CandidateKinds kinds, EntityKind kind) {
    switch (kinds) {
        case CandidateKinds::NodesOnly: return kind == EntityKind::MobileNode;
        case CandidateKinds::AccessPointsOnly: return kind == EntityKind::AccessPoint;
        case CandidateKinds::Both:
            return kind == EntityKind::MobileNode || kind == EntityKind::AccessPoint;
    }
    return false;
}

const char* to_string(CandidateKinds kinds) {
    switch (kinds) {
        case CandidateKinds::NodesOnly: return "node";
        case CandidateKinds::AccessPointsOnly: return "ap";
        case CandidateKinds::Both: return "both";
    }
    return "?";
}

std::optional<CandidateKinds> candidate_kinds_from_string(std::string_view s) {
    if (s == "node") return CandidateKinds::NodesOnly;
    if (s == "ap") return CandidateKinds::AccessPointsOnly;
    if (s == "both") return CandidateKinds::Both;
    return std::nullopt;
}

Seconds CommunityCertificate::max_window() const {
    Seconds m = 0;
    for (Seconds w : windows) m = std::max(m, w);
    return m;
}

int CommunityCertificate::friend_index(EntityId id) const {
    auto it = std::lower_bound(friends.begin(), friends.end(), id);
    if (it == friends.end() || !(*it == id)) return -1;
    return static_cast<int>(it - friends.begin());
}

Seconds CommunityCertificate::window_for(const SignedUpdate& update, int friend_idx) const {
    if (update.signer.kind == EntityKind::Authority) return max_window();
    return windows[static_cast<std::size_t>(friend_idx)];
}

std::vector<std::uint8_t> certificate_payload(EntityId owner, const std::vector<EntityId>& friends,
                                              const std::vector<Seconds>& windows, int threshold) {
    ByteWriter w;
    w.tag("COMC");
    w.u32(owner.value);
    w.u8(static_cast<std::uint8_t>(owner.kind));
    w.u32(static_cast<std::uint32_t>(friends.size()));
    for (EntityId f : friends) {
        w.u32(f.value);
        w.u8(static_cast<std::uint8_t>(f.kind));
    }
    for (Seconds s : windows) w.i64(s);
    w.u32(static_cast<std::uint32_t>(threshold));
    return w.data();
}

std::vector<std::uint8_t> update_payload(EntityId owner, Timestamp t) {
    ByteWriter w;
    w.tag("SUPD");
    w.u32(owner.value);
    w.u8(static_cast<std::uint8_t>(owner.kind));
    w.i64(t);
    return w.data();
}

std::map<EntityId, std::vector<int>> meeting_days(std::span<const ContactEvent> node_events,
                                                  EntityId node, CandidateKinds kinds,
                                                  Timestamp origin) {
    std::map<EntityId, std::vector<int>> days;
    for (const ContactEvent& ev : node_events) {
        if (!ev.touches(node)) continue;
        EntityId peer = ev.peer_of(node);
        if (!allows(kinds, peer.kind)) continue;
        int d = day_index(ev.start, origin);
        auto& list = days[peer];
        if (list.empty() || list.back() != d) list.push_back(d);  // events are start-sorted
    }
    return days;
}

std::map<EntityId, std::vector<int>> meeting_days(const ContactTrace& training, EntityId node,
                                                  CandidateKinds kinds) {
    return meeting_days(training.events(), node, kinds, training.span().begin);
}

namespace {

std::vector<EntityId> friend_set_from_days(const std::map<EntityId, std::vector<int>>& days) {
    long long total = 0;
    for (const auto& [peer, list] : days) total += static_cast<long long>(list.size());
    const long long n = static_cast<long long>(days.size());

    std::vector<EntityId> fs;
    for (const auto& [peer, list] : days) {
        // d >= mean, kept exact: d * |S| >= sum of all d
        if (static_cast<long long>(list.size()) * n >= total) fs.push_back(peer);
    }
    return fs;  // map iteration is id-ordered
}

std::vector<Seconds> windows_from_days(const std::map<EntityId, std::vector<int>>& days,
                                       const std::vector<EntityId>& friends, int training_days) {
    std::vector<Seconds> windows;
    windows.reserve(friends.size());
    for (EntityId f : friends) {
        auto it = days.find(f);
        if (it == days.end() || it->second.empty())
            throw Error("friend never met during training");
        const auto& d = it->second;
        if (d.size() == 1) {
            // One observation carries no rate information; use the widest
            // window consistent with training.
            windows.push_back(static_cast<Seconds>(training_days) * kSecondsPerDay);
        } else {
            const double mean_gap_days =
                static_cast<double>(d.back() - d.front()) / static_cast<double>(d.size() - 1);
            windows.push_back(static_cast<Seconds>(std::llround(mean_gap_days * kSecondsPerDay)));
        }
    }
    return windows;
}

}  // namespace

std::vector<EntityId> compute_friend_set(const ContactTrace& training, EntityId node,
                                         CandidateKinds kinds) {
    auto days = meeting_days(training, node, kinds);
    if (days.empty())
        throw EmptyFriendSet("node '" + training.table().name(node) +
                             "' met no certified candidate during training");
    return friend_set_from_days(days);
}

std::vector<Seconds> compute_freshness_windows(const ContactTrace& training, EntityId node,
                                               const std::vector<EntityId>& friends) {
    auto days = meeting_days(training, node, CandidateKinds::Both);
    return windows_from_days(days, friends, day_count(training.span()));
}

bool verify_update(const CommunityCertificate& cert, EntityId friend_id, const SignedUpdate& update,
                   const SignatureScheme& scheme, const PublicDirectory& dir,
                   EntityId authority_id) {
    if (update.signer != friend_id && update.signer != authority_id) return false;
    const PublicKey* pk = dir.find(update.signer);
    if (pk == nullptr) return false;
    return scheme.verify(update_payload(cert.owner, update.t), update.sig, *pk);
}

bool is_valid(const CommunityCertificate& cert, Timestamp now, const SignatureScheme& scheme,
              const PublicDirectory& dir, const Authority& authority) {
    auto payload = certificate_payload(cert.owner, cert.friends, cert.windows, cert.threshold);
    if (!scheme.verify(payload, cert.ca_sig, authority.public_key()))
        throw CertificateFormatError("certificate authority signature does not verify");

    int fresh = 0;
    for (const auto& [friend_id, update] : cert.updates) {
        int idx = cert.friend_index(friend_id);
        if (idx < 0) continue;
        if (!verify_update(cert, friend_id, update, scheme, dir, authority.id())) continue;
        if (is_fresh(update, cert.window_for(update, idx), now)) ++fresh;
    }
    return fresh >= cert.threshold;
}

void refresh_on_meeting(CommunityCertificate& cert, EntityId friend_id, Timestamp now,
                        const SignatureScheme& scheme, const KeyStore& keys) {
    if (cert.friend_index(friend_id) < 0) return;  // strangers never refresh
    auto existing = cert.updates.find(friend_id);
    if (existing != cert.updates.end() && existing->second.signer == friend_id &&
        existing->second.t > now)
        return;  // later timestamp wins
    SignedUpdate update;
    update.signer = friend_id;
    update.t = now;
    update.sig = scheme.sign(friend_id, keys.get(friend_id).sec, update_payload(cert.owner, now));
    cert.updates[friend_id] = update;
}

std::vector<std::pair<Timestamp, int>> refresh_timeline(std::span<const ContactEvent> node_events,
                                                        EntityId owner,
                                                        const std::vector<EntityId>& friends) {
    std::vector<std::pair<Timestamp, int>> timeline;
    for (const ContactEvent& ev : node_events) {
        if (!ev.touches(owner)) continue;
        EntityId peer = ev.peer_of(owner);
        auto it = std::lower_bound(friends.begin(), friends.end(), peer);
        if (it == friends.end() || !(*it == peer)) continue;
        timeline.emplace_back(ev.start, static_cast<int>(it - friends.begin()));
    }
    std::sort(timeline.begin(), timeline.end());
    return timeline;
}

std::vector<std::pair<Timestamp, int>> refresh_timeline(const ContactTrace& trace, EntityId owner,
                                                        const std::vector<EntityId>& friends) {
    return refresh_timeline(trace.events(), owner, friends);
}

ThresholdSelection select_threshold(const std::vector<Seconds>& windows, Timestamp issue_time,
                                    const std::vector<std::pair<Timestamp, int>>& timeline,
                                    Timestamp eval_end) {
    const int n = static_cast<int>(windows.size());
    ThresholdSelection sel;
    if (n == 0) throw EmptyFriendSet("cannot select a threshold for an empty friend set");
    if (timeline.empty()) {
        // Nothing to replay: every threshold is vacuously clean.
        sel.threshold = n;
        sel.min_fresh_count = n;
        return sel;
    }

    Seconds max_window = 0;
    for (Seconds w : windows) max_window = std::max(max_window, w);
    std::vector<Timestamp> expiry(windows.size(), issue_time + max_window);

    auto count_ge = [&](Timestamp t) {
        int c = 0;
        for (Timestamp e : expiry)
            if (e >= t) ++c;
        return c;
    };

    int min_count = std::numeric_limits<int>::max();
    std::size_t i = 0;
    bool past_first = false;
    while (i < timeline.size()) {
        const Timestamp t = timeline[i].first;
        // Gap before this batch of refreshes: the scarcest instant is just
        // before t, where exactly the entries with expiry >= t are fresh.
        if (past_first) min_count = std::min(min_count, count_ge(t));
        for (; i < timeline.size() && timeline[i].first == t; ++i)
            expiry[static_cast<std::size_t>(timeline[i].second)] =
                t + windows[static_cast<std::size_t>(timeline[i].second)];
        past_first = true;
    }
    // The replay domain is [first refresh, eval_end): the trace carries no
    // instant at eval_end itself, so the final exposure is just before it.
    min_count = std::min(min_count, count_ge(eval_end));

    sel.min_fresh_count = min_count;
    sel.flagged = min_count < 1;
    sel.threshold = std::clamp(min_count, 1, n);
    return sel;
}

std::vector<std::pair<Timestamp, Timestamp>> invalid_intervals(
    const std::vector<Seconds>& windows, Timestamp issue_time,
    const std::vector<std::pair<Timestamp, int>>& timeline, int threshold, Timestamp eval_end) {
    std::vector<std::pair<Timestamp, Timestamp>> out;
    if (timeline.empty()) return out;
    const Timestamp first_refresh = timeline.front().first;

    Seconds max_window = 0;
    for (Seconds w : windows) max_window = std::max(max_window, w);

    // Validity can only flip at a refresh instant or when an entry's expiry
    // passes, so sampling the step function at those instants is exact. The
    // domain is [first refresh, eval_end).
    std::set<Timestamp> instants;
    instants.insert(issue_time + max_window);
    for (const auto& [t, idx] : timeline) {
        instants.insert(t);
        instants.insert(t + windows[static_cast<std::size_t>(idx)]);
    }

    std::vector<Timestamp> expiry(windows.size(), issue_time + max_window);
    std::size_t next_refresh = 0;
    bool invalid_open = false;
    Timestamp invalid_start = 0;
    for (Timestamp t : instants) {
        if (t < first_refresh || t >= eval_end) continue;
        for (; next_refresh < timeline.size() && timeline[next_refresh].first <= t; ++next_refresh) {
            auto idx = static_cast<std::size_t>(timeline[next_refresh].second);
            expiry[idx] = timeline[next_refresh].first + windows[idx];
        }
        int fresh = 0;
        for (Timestamp e : expiry)
            if (e > t) ++fresh;
        const bool ok = fresh >= threshold;
        if (!ok && !invalid_open) {
            invalid_open = true;
            invalid_start = t;
        } else if (ok && invalid_open) {
            out.emplace_back(invalid_start, t);
            invalid_open = false;
        }
    }
    if (invalid_open) out.emplace_back(invalid_start, eval_end);
    return out;
}

std::vector<Timestamp> expiries_at(const std::vector<Seconds>& windows, Timestamp issue_time,
                                   const std::vector<std::pair<Timestamp, int>>& timeline,
                                   Timestamp t0) {
    Seconds max_window = 0;
    for (Seconds w : windows) max_window = std::max(max_window, w);
    std::vector<Timestamp> expiry(windows.size(), issue_time + max_window);
    for (const auto& [t, idx] : timeline) {
        if (t > t0) break;
        expiry[static_cast<std::size_t>(idx)] = t + windows[static_cast<std::size_t>(idx)];
    }
    return expiry;
}

Seconds remaining_validity(std::vector<Timestamp> expiries, int threshold, Timestamp t0) {
    if (threshold < 1 || threshold > static_cast<int>(expiries.size()))
        throw ConfigError("threshold out of range");
    std::sort(expiries.begin(), expiries.end(), std::greater<>());
    const Timestamp kth = expiries[static_cast<std::size_t>(threshold - 1)];
    return kth > t0 ? kth - t0 : 0;
}

CommunityCertificate issue_certificate(const Authority& authority, EntityId owner,
                                       const ContactTrace& training, CandidateKinds kinds,
                                       const ThresholdPolicy& policy,
                                       const std::vector<ContactEvent>* owner_training_events) {
    CommunityCertificate cert;
    cert.owner = owner;
    auto days = owner_training_events
                    ? meeting_days(*owner_training_events, owner, kinds, training.span().begin)
                    : meeting_days(training, owner, kinds);
    if (days.empty())
        throw EmptyFriendSet("node '" + training.table().name(owner) +
                             "' met no certified candidate during training");
    cert.friends = friend_set_from_days(days);
    auto all_days = owner_training_events
                        ? meeting_days(*owner_training_events, owner, CandidateKinds::Both,
                                       training.span().begin)
                        : meeting_days(training, owner, CandidateKinds::Both);
    cert.windows = windows_from_days(all_days, cert.friends, day_count(training.span()));

    const Timestamp issue_time = training.span().end;
    if (const auto* fixed = std::get_if<FixedThreshold>(&policy)) {
        if (fixed->k < 1 || fixed->k > static_cast<int>(cert.friends.size()))
            throw ConfigError("fixed threshold out of range for friend set of size " +
                              std::to_string(cert.friends.size()));
        cert.threshold = fixed->k;
    } else {
        const auto& replay = std::get<ReplayThreshold>(policy);
        if (replay.evaluation == nullptr) throw ConfigError("replay threshold needs a trace");
        auto timeline = replay.owner_events
                            ? refresh_timeline(*replay.owner_events, owner, cert.friends)
                            : refresh_timeline(*replay.evaluation, owner, cert.friends);
        cert.threshold =
            select_threshold(cert.windows, issue_time, timeline, replay.evaluation->span().end)
                .threshold;
    }

    cert.ca_sig =
        authority.sign(certificate_payload(cert.owner, cert.friends, cert.windows, cert.threshold));

    for (EntityId f : cert.friends) {
        SignedUpdate seed;
        seed.signer = authority.id();
        seed.t = issue_time;
        seed.sig = authority.sign(update_payload(owner, issue_time));
        cert.updates[f] = seed;
    }
    return cert;
}

namespace {

std::optional<std::string> shape_problem(const CommunityCertificate& cert) {
    if (!cert.owner.valid()) return "missing owner";
    if (cert.friends.empty()) return "empty friend set";
    if (cert.windows.size() != cert.friends.size())
        return "freshness windows do not match the friend set";
    if (!std::is_sorted(cert.friends.begin(), cert.friends.end()))
        return "friend set not in canonical order";
    for (std::size_t i = 1; i < cert.friends.size(); ++i)
        if (cert.friends[i] == cert.friends[i - 1]) return "duplicate friend entry";
    if (cert.threshold < 1 || cert.threshold > static_cast<int>(cert.friends.size()))
        return "threshold out of range";
    for (const auto& [friend_id, update] : cert.updates) {
        if (cert.friend_index(friend_id) < 0) return "update from an entity outside the friend set";
        if (update.signer != friend_id && update.signer.kind != EntityKind::Authority)
            return "update signed by the wrong entity";
    }
    return std::nullopt;
}

}  // namespace

AuthResult authenticate(const CommunityCertificate& cert, Timestamp now,
                        const SignatureScheme& scheme, const PublicDirectory& dir,
                        const Authority& authority) {
    AuthResult result;
    if (auto problem = shape_problem(cert)) {
        result.reason = "malformed certificate: " + *problem;
        return result;
    }
    auto payload = certificate_payload(cert.owner, cert.friends, cert.windows, cert.threshold);
    if (!scheme.verify(payload, cert.ca_sig, authority.public_key())) {
        result.reason = "authority signature does not verify";
        return result;
    }
    if (authority.is_revoked(cert.owner)) {
        result.reason = "owner is revoked";
        return result;
    }
    bool valid = false;
    try {
        valid = is_valid(cert, now, scheme, dir, authority);
    } catch (const CertificateFormatError& e) {
        result.reason = e.what();
        return result;
    }
    if (!valid) {
        result.reason = "too few fresh updates";
        return result;
    }
    result.ok = true;
    return result;
}

std::string certificate_to_json(const CommunityCertificate& cert, const EntityTable& table) {
    nlohmann::json j;
    j["owner"] = table.name(cert.owner);
    j["threshold"] = cert.threshold;
    nlohmann::json friends = nlohmann::json::array();
    for (std::size_t i = 0; i < cert.friends.size(); ++i) {
        nlohmann::json f;
        f["id"] = table.name(cert.friends[i]);
        f["kind"] = to_string(cert.friends[i].kind);
        f["window_days"] =
            static_cast<double>(cert.windows[i]) / static_cast<double>(kSecondsPerDay);
        auto it = cert.updates.find(cert.friends[i]);
        if (it != cert.updates.end()) {
            f["update_t"] = it->second.t;
            f["update_signer"] = table.name(it->second.signer);
        }
        friends.push_back(std::move(f));
    }
    j["friends"] = std::move(friends);
    j["ca_sig"] = {{"tag_lo", cert.ca_sig.tag_lo}, {"tag_hi", cert.ca_sig.tag_hi}};
    return j.dump(2);
}

}  // namespace clonesim
