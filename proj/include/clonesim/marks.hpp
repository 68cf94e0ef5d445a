#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "clonesim/identity.hpp"

namespace clonesim {

struct Nonce {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;
    friend bool operator==(const Nonce& a, const Nonce& b) { return a.hi == b.hi && a.lo == b.lo; }
};

// Doubly-signed session token for one pair. The initiator is the lower id;
// both signatures cover the identical (MARK, t, r_initiator, r_responder)
// tuple, so the pair is recoverable from the signer fields.
struct Mark {
    Timestamp t = 0;
    Nonce r_initiator;
    Nonce r_responder;
    Signature sig_initiator;
    Signature sig_responder;

    EntityId initiator() const { return sig_initiator.signer; }
    EntityId responder() const { return sig_responder.signer; }
    bool same_tuple(const Mark& other) const {
        return t == other.t && r_initiator == other.r_initiator && r_responder == other.r_responder;
    }
};

std::vector<std::uint8_t> mark_payload(Timestamp t, const Nonce& r_initiator,
                                       const Nonce& r_responder);
bool validate_mark(const Mark& mark, const SignatureScheme& scheme, const PublicDirectory& dir);

// Length-prefixed binary with fixed field order
// (tag, t, r_i, r_j, sig_i, sig_j).
std::vector<std::uint8_t> serialize_mark(const Mark& mark);
std::optional<Mark> parse_mark(std::span<const std::uint8_t> bytes);

// Latest completed mark per peer, owned and mutated only by its node.
class MarkStore {
public:
    MarkStore() = default;
    explicit MarkStore(EntityId owner) : owner_(owner) {}

    EntityId owner() const { return owner_; }
    const Mark* find(EntityId peer) const;
    void store(EntityId peer, const Mark& mark) { marks_[peer] = mark; }
    std::size_t size() const { return marks_.size(); }

    // A clone copies the victim's state wholesale but operates it as the
    // same identity, so only the slots move.
    MarkStore forked_copy() const { return *this; }

private:
    EntityId owner_;
    std::map<EntityId, Mark> marks_;
};

enum class CheckStatus : std::uint8_t { Ok, Failed, ProtocolViolation };

enum class EvidenceKind : std::uint8_t { ConflictingMarks, MissingMark };

const char* to_string(EvidenceKind kind);

struct MarkConflictEvidence {
    EvidenceKind kind = EvidenceKind::ConflictingMarks;
    Mark expected;
    std::optional<Mark> presented;  // absent for MissingMark
    EntityId accused;
    EntityId detector;
};

std::vector<std::uint8_t> serialize_evidence(const MarkConflictEvidence& ev);

struct CheckResult {
    CheckStatus status = CheckStatus::Ok;
    std::optional<MarkConflictEvidence> evidence;
    std::string note;
};

// Compares the peer's presented mark against the checker's stored one.
// A presented mark that fails signature validation is a protocol violation
// (tampering), distinct from the honest-message mismatch that exposes a
// clone.
CheckResult mark_check(EntityId checker, EntityId checked, const Mark& presented,
                       const Mark& expected, const SignatureScheme& scheme,
                       const PublicDirectory& dir);

struct UpdateOptions {
    // Messages delivered before the link drops; fewer than 4 aborts the
    // exchange and leaves both stores untouched.
    int deliver_messages = 4;
    bool corrupt_responder_sig = false;  // fault-injection hook for tests
};

// Four-message exchange of Fig-style mark refresh: nonce offer, responder's
// signed mark, initiator's countersignature, final ack. Returns true iff it
// completed and both stores replaced their slot.
bool mark_update(MarkStore& initiator_store, MarkStore& responder_store,
                 const KeyPair& initiator_keys, const KeyPair& responder_keys, Timestamp now,
                 std::mt19937_64& rng, const SignatureScheme& scheme, const PublicDirectory& dir,
                 const UpdateOptions& options = {});

struct RevocationDecision {
    bool revoked = false;
    std::string reason;
    std::optional<Revocation> record;
};

// Authority-side evidence evaluation. Conflicting-marks evidence revokes iff
// both marks verify fully, name the same pair including the accused, and
// differ in (t, nonces). Missing-mark evidence revokes iff the expected mark
// verifies and names the accused; the report itself is trusted, since in
// this model detectors are honest.
RevocationDecision ca_revoke(Authority& authority, const MarkConflictEvidence& evidence,
                             Timestamp now, const SignatureScheme& scheme,
                             const PublicDirectory& dir);

struct MeetingEnv {
    const SignatureScheme& scheme;
    const PublicDirectory& directory;
    const KeyStore& keys;
    Authority& authority;
};

struct MeetingPolicy {
    bool a_refuses_checks = false;
    bool b_refuses_checks = false;
};

struct MeetingOutcome {
    bool session_refused = false;  // revoked participant, or check refusal
    std::vector<CheckResult> checks;
    bool updated = false;
    std::vector<Revocation> revocations;

    bool any_failed() const {
        for (const CheckResult& c : checks)
            if (c.status == CheckStatus::Failed) return true;
        return false;
    }
};

// Full meeting procedure between two stores: each side holding a mark for
// the other checks it first (lower id initiates), then the pair refreshes.
// Any failed check files evidence with the authority and aborts the refresh.
// A refusal by either side also aborts the refresh, so the meeting yields no
// fresh mark.
MeetingOutcome on_meeting(MarkStore& store_a, MarkStore& store_b, Timestamp now,
                          std::mt19937_64& rng, MeetingEnv& env, const MeetingPolicy& policy = {});

}  // namespace clonesim
