#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "clonesim/common.hpp"

namespace clonesim {

enum class EntityKind : std::uint8_t { MobileNode = 0, AccessPoint = 1, Authority = 2 };

const char* to_string(EntityKind kind);

// Compact entity handle. The numeric id is unique across all kinds within a
// simulation; the kind rides along so most code never needs the table.
struct EntityId {
    static constexpr std::uint32_t kInvalid = 0xffffffffu;

    std::uint32_t value = kInvalid;
    EntityKind kind = EntityKind::MobileNode;

    bool valid() const { return value != kInvalid; }

    friend bool operator==(const EntityId& a, const EntityId& b) { return a.value == b.value; }
    friend bool operator!=(const EntityId& a, const EntityId& b) { return a.value != b.value; }
    friend bool operator<(const EntityId& a, const EntityId& b) { return a.value < b.value; }
    friend bool operator>(const EntityId& a, const EntityId& b) { return a.value > b.value; }
};

struct EntityIdHash {
    std::size_t operator()(const EntityId& id) const { return std::hash<std::uint32_t>{}(id.value); }
};

// Name <-> id interner. Ids are assigned sequentially in insertion order, so
// a table rebuilt from the same inputs is identical. Kind is immutable: a
// name reappearing with a different kind is a hard error.
class EntityTable {
public:
    EntityId intern(std::string_view name, EntityKind kind);
    std::optional<EntityId> find(std::string_view name) const;
    const std::string& name(EntityId id) const;
    EntityKind kind_of(std::uint32_t value) const;
    std::size_t size() const { return entries_.size(); }
    EntityId id_at(std::uint32_t value) const;
    std::vector<EntityId> all(std::optional<EntityKind> kind = std::nullopt) const;

private:
    struct Entry {
        std::string name;
        EntityKind kind;
    };
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

struct PublicKey {
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    friend bool operator==(const PublicKey& x, const PublicKey& y) {
        return x.a == y.a && x.b == y.b;
    }
};

struct PrivateKey {
    std::uint64_t k0 = 0;
    std::uint64_t k1 = 0;
};

struct KeyPair {
    PublicKey pub;
    PrivateKey sec;
};

struct Signature {
    EntityId signer;
    std::uint64_t tag_lo = 0;
    std::uint64_t tag_hi = 0;
    friend bool operator==(const Signature& x, const Signature& y) {
        return x.signer == y.signer && x.tag_lo == y.tag_lo && x.tag_hi == y.tag_hi;
    }
};

// Signing backend. The simulation needs unforgeability as a property, not a
// concrete scheme, so the default backend below is a keyed MAC; a real
// asymmetric scheme can be swapped in behind this interface.
class SignatureScheme {
public:
    virtual ~SignatureScheme() = default;
    virtual KeyPair generate(std::mt19937_64& rng) = 0;
    virtual Signature sign(EntityId signer, const PrivateKey& key,
                           std::span<const std::uint8_t> payload) const = 0;
    virtual bool verify(std::span<const std::uint8_t> payload, const Signature& sig,
                        const PublicKey& key) const = 0;
};

// SipHash-2-4 based simulated signatures. The scheme keeps a private
// public->secret map, which makes `verify` the ideal-functionality check
// "a signature is valid iff it was produced under the key bound to this
// public key". Keys are registered at generation time (setup phase); after
// setup the map is only read, so concurrent verification is safe.
class MacSignatureScheme : public SignatureScheme {
public:
    KeyPair generate(std::mt19937_64& rng) override;
    Signature sign(EntityId signer, const PrivateKey& key,
                   std::span<const std::uint8_t> payload) const override;
    bool verify(std::span<const std::uint8_t> payload, const Signature& sig,
                const PublicKey& key) const override;

private:
    struct PubHash {
        std::size_t operator()(const PublicKey& k) const { return mix64(k.a, k.b); }
    };
    std::unordered_map<PublicKey, PrivateKey, PubHash> registered_;
};

std::uint64_t siphash24(std::uint64_t k0, std::uint64_t k1, std::span<const std::uint8_t> data);

// Public keys of every entity, as known to all verifiers.
class PublicDirectory {
public:
    void put(EntityId id, const PublicKey& key) { keys_[id.value] = key; }
    const PublicKey* find(EntityId id) const {
        auto it = keys_.find(id.value);
        return it == keys_.end() ? nullptr : &it->second;
    }

private:
    std::unordered_map<std::uint32_t, PublicKey> keys_;
};

// Private key material held by the simulation harness.
class KeyStore {
public:
    void put(EntityId id, const KeyPair& kp) { keys_[id.value] = kp; }
    const KeyPair& get(EntityId id) const;
    bool has(EntityId id) const { return keys_.count(id.value) != 0; }

private:
    std::unordered_map<std::uint32_t, KeyPair> keys_;
};

struct GeneratedIdentity {
    EntityId id;
    KeyPair keys;
};

// Fresh entity + key pair. Deterministic given the table state and rng state.
GeneratedIdentity generate_identity(EntityTable& table, SignatureScheme& scheme, EntityKind kind,
                                    std::mt19937_64& rng, std::string_view name_hint = {});

struct Revocation {
    EntityId revoked;
    Timestamp time = 0;
    std::string evidence_kind;
    std::vector<std::uint8_t> evidence;
};

// Trusted authority: signing identity plus the append-only revocation list.
// A recorded revocation is visible to every verifier immediately, which
// models the authority's out-of-band broadcast channel.
class Authority {
public:
    Authority(EntityId id, KeyPair keys, const SignatureScheme& scheme)
        : id_(id), keys_(std::move(keys)), scheme_(&scheme) {}

    EntityId id() const { return id_; }
    const PublicKey& public_key() const { return keys_.pub; }
    Signature sign(std::span<const std::uint8_t> payload) const {
        return scheme_->sign(id_, keys_.sec, payload);
    }

    bool is_revoked(EntityId id) const { return revoked_.count(id.value) != 0; }
    void record_revocation(Revocation rev);
    const std::vector<Revocation>& revocation_log() const { return log_; }
    void export_revocations_csv(std::string& out) const;

private:
    EntityId id_;
    KeyPair keys_;
    const SignatureScheme* scheme_;
    std::vector<Revocation> log_;
    std::unordered_set<std::uint32_t> revoked_;
};

// Key material for every entity currently in the table, generated in id
// order from the seed. Includes one authority identity (added to the table
// if not present) exposed as `authority_id`.
struct WorldKeys {
    MacSignatureScheme scheme;
    KeyStore keys;
    PublicDirectory directory;
    EntityId authority_id;

    Authority make_authority() const {
        return Authority(authority_id, keys.get(authority_id), scheme);
    }
};

constexpr const char* kAuthorityName = "@authority";

WorldKeys make_world_keys(EntityTable& table, std::uint64_t seed);

}  // namespace clonesim
