#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clonesim/identity.hpp"
#include "clonesim/trace.hpp"

namespace clonesim {

class EmptyFriendSet : public Error {
public:
    using Error::Error;
};

class CertificateFormatError : public Error {
public:
    using Error::Error;
};

// Which entity kinds may appear in a certificate's friend set: community
// peers, fixed infrastructure, or both.
enum class CandidateKinds : std::uint8_t { NodesOnly, AccessPointsOnly, Both };

bool allows(CandidateKinds kinds, EntityKind kind);
const char* to_string(CandidateKinds kinds);
std::optional<CandidateKinds> candidate_kinds_from_string(std::string_view s);

// A friend's signed timestamp of the last physical contact with the owner.
// Seed entries written at issue time are signed by the authority instead.
struct SignedUpdate {
    EntityId signer;
    Timestamp t = 0;
    Signature sig;
};

struct CommunityCertificate {
    EntityId owner;
    std::vector<EntityId> friends;   // sorted
    std::vector<Seconds> windows;    // per-friend freshness window, aligned with friends
    int threshold = 1;               // fresh updates required for validity
    Signature ca_sig;                // over (owner, friends, windows, threshold)
    std::map<EntityId, SignedUpdate> updates;  // keys subset of friends

    Seconds max_window() const;
    int friend_index(EntityId id) const;  // -1 when absent

    // Authority-signed seed updates carry the widest window; a friend's own
    // update uses that friend's window.
    Seconds window_for(const SignedUpdate& update, int friend_idx) const;
};

std::vector<std::uint8_t> certificate_payload(EntityId owner, const std::vector<EntityId>& friends,
                                              const std::vector<Seconds>& windows, int threshold);
std::vector<std::uint8_t> update_payload(EntityId owner, Timestamp t);

// Distinct training-day indexes per candidate the node met, restricted to
// the allowed kinds. Ordered by candidate id. The span overload takes the
// node's own event list (from a NodeEventIndex) to keep batch passes linear.
std::map<EntityId, std::vector<int>> meeting_days(std::span<const ContactEvent> node_events,
                                                  EntityId node, CandidateKinds kinds,
                                                  Timestamp origin);
std::map<EntityId, std::vector<int>> meeting_days(const ContactTrace& training, EntityId node,
                                                  CandidateKinds kinds);

// Candidates met on at least the mean number of distinct meeting days
// (exact integer comparison: d * |S| >= sum of d). Throws EmptyFriendSet
// when the node met nobody of an allowed kind.
std::vector<EntityId> compute_friend_set(const ContactTrace& training, EntityId node,
                                         CandidateKinds kinds);

// Mean gap in days between consecutive distinct meeting days, converted to
// seconds; a friend seen on a single day falls back to the full training
// length in days.
std::vector<Seconds> compute_freshness_windows(const ContactTrace& training, EntityId node,
                                               const std::vector<EntityId>& friends);

inline bool is_fresh(const SignedUpdate& update, Seconds window, Timestamp now) {
    return now < update.t + window;
}

bool verify_update(const CommunityCertificate& cert, EntityId friend_id, const SignedUpdate& update,
                   const SignatureScheme& scheme, const PublicDirectory& dir, EntityId authority_id);

// True iff at least `threshold` verified updates are fresh at `now`.
// Throws CertificateFormatError when the authority signature is invalid,
// which is a different failure than staleness.
bool is_valid(const CommunityCertificate& cert, Timestamp now, const SignatureScheme& scheme,
              const PublicDirectory& dir, const Authority& authority);

// Replaces the friend's update on physical contact; meetings with strangers
// leave the certificate untouched.
void refresh_on_meeting(CommunityCertificate& cert, EntityId friend_id, Timestamp now,
                        const SignatureScheme& scheme, const KeyStore& keys);

// (time, friend-index) refresh events for the owner, sorted.
std::vector<std::pair<Timestamp, int>> refresh_timeline(std::span<const ContactEvent> node_events,
                                                        EntityId owner,
                                                        const std::vector<EntityId>& friends);
std::vector<std::pair<Timestamp, int>> refresh_timeline(const ContactTrace& trace, EntityId owner,
                                                        const std::vector<EntityId>& friends);

struct ThresholdSelection {
    int threshold = 1;
    // Even a single fresh update is not always available: threshold 1 still
    // shows false positives for this node.
    bool flagged = false;
    int min_fresh_count = 0;
};

// Largest threshold for which an honest replay (every friend meeting
// refreshes the update) keeps the certificate valid at every instant after
// the node's first evaluation refresh. Equivalently: the minimum fresh-entry
// count over that period, clamped to [1, |friends|].
ThresholdSelection select_threshold(const std::vector<Seconds>& windows, Timestamp issue_time,
                                    const std::vector<std::pair<Timestamp, int>>& timeline,
                                    Timestamp eval_end);

// Maximal intervals after the first refresh during which fewer than
// `threshold` entries are fresh, given the honest refresh timeline.
// Intervals still open at eval_end are clipped there.
std::vector<std::pair<Timestamp, Timestamp>> invalid_intervals(
    const std::vector<Seconds>& windows, Timestamp issue_time,
    const std::vector<std::pair<Timestamp, int>>& timeline, int threshold, Timestamp eval_end);

// Per-friend expiry instants with every refresh up to and including t0
// applied; unrefreshed friends still carry the authority seed.
std::vector<Timestamp> expiries_at(const std::vector<Seconds>& windows, Timestamp issue_time,
                                   const std::vector<std::pair<Timestamp, int>>& timeline,
                                   Timestamp t0);

// Closed-form remaining validity from t0 with no further refreshes: the
// threshold-th largest expiry minus t0, floored at zero.
Seconds remaining_validity(std::vector<Timestamp> expiries, int threshold, Timestamp t0);

struct FixedThreshold {
    int k = 1;
};
struct ReplayThreshold {
    const ContactTrace* evaluation = nullptr;
    // optional pre-indexed owner events from the evaluation trace
    const std::vector<ContactEvent>* owner_events = nullptr;
};
using ThresholdPolicy = std::variant<FixedThreshold, ReplayThreshold>;

// Builds and signs a certificate from the training logs. The update set is
// pre-seeded with authority-signed timestamps at issue time so the
// certificate is immediately valid. `owner_training_events`, when given,
// avoids rescanning the trace per node.
CommunityCertificate issue_certificate(const Authority& authority, EntityId owner,
                                       const ContactTrace& training, CandidateKinds kinds,
                                       const ThresholdPolicy& policy,
                                       const std::vector<ContactEvent>* owner_training_events =
                                           nullptr);

struct AuthResult {
    bool ok = false;
    std::string reason;  // diagnostic on denial
};

// Verifier-side admission: well-formed certificate, valid authority
// signature, owner not revoked, enough fresh updates.
AuthResult authenticate(const CommunityCertificate& cert, Timestamp now,
                        const SignatureScheme& scheme, const PublicDirectory& dir,
                        const Authority& authority);

std::string certificate_to_json(const CommunityCertificate& cert, const EntityTable& table);

}  // namespace clonesim
