#include "clonesim/marks.hpp"

#include <algorithm>

namespace clonesim {

const char* to_string(EvidenceKind kind) {
    switch (kind) {
        case EvidenceKind::ConflictingMarks: return "conflicting-marks";
        case EvidenceKind::MissingMark: return "missing-mark";
    }
    return "?";
}

std::vector<std::uint8_t> mark_payload(Timestamp t, const Nonce& r_initiator,
                                       const Nonce& r_responder) {
    ByteWriter w;
    w.tag("MARK");
    w.i64(t);
    w.u64(r_initiator.hi);
    w.u64(r_initiator.lo);
    w.u64(r_responder.hi);
    w.u64(r_responder.lo);
    return w.data();
}

bool validate_mark(const Mark& mark, const SignatureScheme& scheme, const PublicDirectory& dir) {
    if (!mark.initiator().valid() || !mark.responder().valid()) return false;
    if (!(mark.initiator() < mark.responder())) return false;
    const PublicKey* pk_i = dir.find(mark.initiator());
    const PublicKey* pk_r = dir.find(mark.responder());
    if (pk_i == nullptr || pk_r == nullptr) return false;
    auto payload = mark_payload(mark.t, mark.r_initiator, mark.r_responder);
    return scheme.verify(payload, mark.sig_initiator, *pk_i) &&
           scheme.verify(payload, mark.sig_responder, *pk_r);
}

namespace {

void write_signature(ByteWriter& w, const Signature& sig) {
    w.u32(sig.signer.value);
    w.u8(static_cast<std::uint8_t>(sig.signer.kind));
    w.u64(sig.tag_lo);
    w.u64(sig.tag_hi);
}

bool read_u32(std::span<const std::uint8_t> b, std::size_t& pos, std::uint32_t& out) {
    if (pos + 4 > b.size()) return false;
    out = 0;
    for (int i = 3; i >= 0; --i) out = (out << 8) | b[pos + static_cast<std::size_t>(i)];
    pos += 4;
    return true;
}

bool read_u64(std::span<const std::uint8_t> b, std::size_t& pos, std::uint64_t& out) {
    if (pos + 8 > b.size()) return false;
    out = 0;
    for (int i = 7; i >= 0; --i) out = (out << 8) | b[pos + static_cast<std::size_t>(i)];
    pos += 8;
    return true;
}

bool read_signature(std::span<const std::uint8_t> b, std::size_t& pos, Signature& sig) {
    std::uint32_t value = 0;
    if (!read_u32(b, pos, value)) return false;
    if (pos + 1 > b.size()) return false;
    std::uint8_t kind = b[pos++];
    if (kind > 2) return false;
    sig.signer = EntityId{value, static_cast<EntityKind>(kind)};
    return read_u64(b, pos, sig.tag_lo) && read_u64(b, pos, sig.tag_hi);
}

}  // namespace

std::vector<std::uint8_t> serialize_mark(const Mark& mark) {
    ByteWriter body;
    body.tag("MARK");
    body.i64(mark.t);
    body.u64(mark.r_initiator.hi);
    body.u64(mark.r_initiator.lo);
    body.u64(mark.r_responder.hi);
    body.u64(mark.r_responder.lo);
    write_signature(body, mark.sig_initiator);
    write_signature(body, mark.sig_responder);

    ByteWriter out;
    out.u32(static_cast<std::uint32_t>(body.data().size()));
    out.bytes(body.data());
    return out.data();
}

std::optional<Mark> parse_mark(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    std::uint32_t len = 0;
    if (!read_u32(bytes, pos, len)) return std::nullopt;
    if (bytes.size() - pos != len) return std::nullopt;
    if (pos + 4 > bytes.size()) return std::nullopt;
    if (!(bytes[pos] == 'M' && bytes[pos + 1] == 'A' && bytes[pos + 2] == 'R' &&
          bytes[pos + 3] == 'K'))
        return std::nullopt;
    pos += 4;

    Mark m;
    std::uint64_t t = 0;
    if (!read_u64(bytes, pos, t)) return std::nullopt;
    m.t = static_cast<Timestamp>(t);
    if (!read_u64(bytes, pos, m.r_initiator.hi) || !read_u64(bytes, pos, m.r_initiator.lo) ||
        !read_u64(bytes, pos, m.r_responder.hi) || !read_u64(bytes, pos, m.r_responder.lo))
        return std::nullopt;
    if (!read_signature(bytes, pos, m.sig_initiator) || !read_signature(bytes, pos, m.sig_responder))
        return std::nullopt;
    if (pos != bytes.size()) return std::nullopt;
    return m;
}

const Mark* MarkStore::find(EntityId peer) const {
    auto it = marks_.find(peer);
    return it == marks_.end() ? nullptr : &it->second;
}

std::vector<std::uint8_t> serialize_evidence(const MarkConflictEvidence& ev) {
    ByteWriter w;
    w.tag("EVID");
    w.u8(static_cast<std::uint8_t>(ev.kind));
    w.u32(ev.accused.value);
    w.u32(ev.detector.value);
    auto expected = serialize_mark(ev.expected);
    w.u32(static_cast<std::uint32_t>(expected.size()));
    w.bytes(expected);
    if (ev.presented) {
        auto presented = serialize_mark(*ev.presented);
        w.u32(static_cast<std::uint32_t>(presented.size()));
        w.bytes(presented);
    } else {
        w.u32(0);
    }
    return w.data();
}

CheckResult mark_check(EntityId checker, EntityId checked, const Mark& presented,
                       const Mark& expected, const SignatureScheme& scheme,
                       const PublicDirectory& dir) {
    CheckResult result;
    if (!validate_mark(presented, scheme, dir)) {
        result.status = CheckStatus::ProtocolViolation;
        result.note = "presented mark carries an invalid signature";
        return result;
    }
    if (presented.same_tuple(expected)) {
        result.status = CheckStatus::Ok;
        return result;
    }
    result.status = CheckStatus::Failed;
    MarkConflictEvidence ev;
    ev.kind = EvidenceKind::ConflictingMarks;
    ev.expected = expected;
    ev.presented = presented;
    ev.accused = checked;
    ev.detector = checker;
    result.evidence = ev;
    return result;
}

bool mark_update(MarkStore& initiator_store, MarkStore& responder_store,
                 const KeyPair& initiator_keys, const KeyPair& responder_keys, Timestamp now,
                 std::mt19937_64& rng, const SignatureScheme& scheme, const PublicDirectory& dir,
                 const UpdateOptions& options) {
    const EntityId initiator = initiator_store.owner();
    const EntityId responder = responder_store.owner();
    if (!(initiator < responder)) throw Error("mark_update: initiator must hold the lower id");

    // Message 1: initiator offers its nonce.
    if (options.deliver_messages < 1) return false;
    Nonce r_i{rng(), rng()};

    // Message 2: responder adds its nonce and signs the tuple.
    if (options.deliver_messages < 2) return false;
    Nonce r_j{rng(), rng()};
    auto payload = mark_payload(now, r_i, r_j);
    Signature sig_j = scheme.sign(responder, responder_keys.sec, payload);
    if (options.corrupt_responder_sig) sig_j.tag_lo ^= 1;
    const PublicKey* pk_j = dir.find(responder);
    if (pk_j == nullptr || !scheme.verify(payload, sig_j, *pk_j)) return false;

    // Message 3: initiator countersigns.
    if (options.deliver_messages < 3) return false;
    Signature sig_i = scheme.sign(initiator, initiator_keys.sec, payload);
    const PublicKey* pk_i = dir.find(initiator);
    if (pk_i == nullptr || !scheme.verify(payload, sig_i, *pk_i)) return false;

    // Message 4: final ack; only a completed exchange commits either store.
    if (options.deliver_messages < 4) return false;

    Mark mark;
    mark.t = now;
    mark.r_initiator = r_i;
    mark.r_responder = r_j;
    mark.sig_initiator = sig_i;
    mark.sig_responder = sig_j;
    initiator_store.store(responder, mark);
    responder_store.store(initiator, mark);
    return true;
}

RevocationDecision ca_revoke(Authority& authority, const MarkConflictEvidence& evidence,
                             Timestamp now, const SignatureScheme& scheme,
                             const PublicDirectory& dir) {
    RevocationDecision decision;
    const Mark& expected = evidence.expected;
    if (!validate_mark(expected, scheme, dir)) {
        decision.reason = "expected mark does not verify";
        return decision;
    }
    auto names = [&](const Mark& m, EntityId who) {
        return m.initiator() == who || m.responder() == who;
    };
    if (!names(expected, evidence.accused)) {
        decision.reason = "expected mark does not involve the accused identity";
        return decision;
    }

    if (evidence.kind == EvidenceKind::ConflictingMarks) {
        if (!evidence.presented) {
            decision.reason = "conflicting-marks evidence lacks the presented mark";
            return decision;
        }
        const Mark& presented = *evidence.presented;
        if (!validate_mark(presented, scheme, dir)) {
            decision.reason = "presented mark does not verify";
            return decision;
        }
        if (presented.initiator() != expected.initiator() ||
            presented.responder() != expected.responder()) {
            decision.reason = "marks name different pairs";
            return decision;
        }
        if (presented.same_tuple(expected)) {
            decision.reason = "marks are identical: no conflict";
            return decision;
        }
    } else if (evidence.presented) {
        decision.reason = "missing-mark evidence must not carry a presented mark";
        return decision;
    }

    Revocation rev;
    rev.revoked = evidence.accused;
    rev.time = now;
    rev.evidence_kind = to_string(evidence.kind);
    rev.evidence = serialize_evidence(evidence);
    authority.record_revocation(rev);
    decision.revoked = true;
    decision.record = std::move(rev);
    return decision;
}

namespace {

// One direction of the pre-refresh check phase. `checker` holds `expected`
// for the peer; the peer answers with its own stored mark or admits having
// none.
CheckResult run_check_direction(const MarkStore& checker_store, const MarkStore& checked_store,
                                MeetingEnv& env) {
    const EntityId checker = checker_store.owner();
    const EntityId checked = checked_store.owner();
    const Mark* expected = checker_store.find(checked);
    const Mark* presented = checked_store.find(checker);
    if (expected == nullptr) throw Error("check direction without an expected mark");
    if (presented == nullptr) {
        // The peer claims a first meeting while the checker holds a
        // completed mark; exactly what a replica forked before that mark
        // looks like.
        CheckResult result;
        result.status = CheckStatus::Failed;
        MarkConflictEvidence ev;
        ev.kind = EvidenceKind::MissingMark;
        ev.expected = *expected;
        ev.presented = std::nullopt;
        ev.accused = checked;
        ev.detector = checker;
        result.evidence = ev;
        return result;
    }
    return mark_check(checker, checked, *presented, *expected, env.scheme, env.directory);
}

}  // namespace

MeetingOutcome on_meeting(MarkStore& store_a, MarkStore& store_b, Timestamp now,
                          std::mt19937_64& rng, MeetingEnv& env, const MeetingPolicy& policy) {
    MeetingOutcome outcome;
    if (store_a.owner() == store_b.owner()) throw Error("a node does not meet its own identity");
    if (env.authority.is_revoked(store_a.owner()) || env.authority.is_revoked(store_b.owner())) {
        outcome.session_refused = true;
        return outcome;
    }

    MarkStore* lo = &store_a;
    MarkStore* hi = &store_b;
    bool lo_refuses = policy.a_refuses_checks;
    bool hi_refuses = policy.b_refuses_checks;
    if (hi->owner() < lo->owner()) {
        std::swap(lo, hi);
        std::swap(lo_refuses, hi_refuses);
    }

    const bool lo_expects = lo->find(hi->owner()) != nullptr;
    const bool hi_expects = hi->find(lo->owner()) != nullptr;

    if (lo_expects || hi_expects) {
        if (lo_refuses || hi_refuses) {
            // A peer dodging the check never receives a fresh mark; its
            // certificate freshness is what eventually locks it out.
            outcome.session_refused = true;
            return outcome;
        }
        if (lo_expects) outcome.checks.push_back(run_check_direction(*lo, *hi, env));
        if (hi_expects) outcome.checks.push_back(run_check_direction(*hi, *lo, env));
        for (const CheckResult& c : outcome.checks) {
            if (c.status == CheckStatus::Failed && c.evidence) {
                RevocationDecision d = ca_revoke(env.authority, *c.evidence, now, env.scheme,
                                                 env.directory);
                if (d.revoked && d.record) outcome.revocations.push_back(*d.record);
            }
        }
        if (outcome.any_failed()) return outcome;  // session aborted, no refresh
        for (const CheckResult& c : outcome.checks)
            if (c.status == CheckStatus::ProtocolViolation) return outcome;
    }

    outcome.updated = mark_update(*lo, *hi, env.keys.get(lo->owner()), env.keys.get(hi->owner()),
                                  now, rng, env.scheme, env.directory);
    return outcome;
}

}  // namespace clonesim
