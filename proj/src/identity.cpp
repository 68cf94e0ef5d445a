#include "clonesim/identity.hpp"

#include <algorithm>

namespace clonesim {

const char* to_string(EntityKind kind) {
    switch (kind) {
        case EntityKind::MobileNode: return "node";
        case EntityKind::AccessPoint: return "ap";
        case EntityKind::Authority: return "authority";
    }
    return "?";
}

EntityId EntityTable::intern(std::string_view name, EntityKind kind) {
    if (name.empty()) throw ConfigError("entity name must be non-empty");
    auto it = index_.find(std::string(name));
    if (it != index_.end()) {
        const Entry& e = entries_[it->second];
        if (e.kind != kind) {
            throw ConfigError("entity '" + std::string(name) + "' already registered as " +
                              to_string(e.kind) + ", cannot re-register as " + to_string(kind));
        }
        return EntityId{it->second, kind};
    }
    auto value = static_cast<std::uint32_t>(entries_.size());
    entries_.push_back(Entry{std::string(name), kind});
    index_.emplace(std::string(name), value);
    return EntityId{value, kind};
}

std::optional<EntityId> EntityTable::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return EntityId{it->second, entries_[it->second].kind};
}

const std::string& EntityTable::name(EntityId id) const {
    if (id.value >= entries_.size()) throw Error("unknown entity id");
    return entries_[id.value].name;
}

EntityKind EntityTable::kind_of(std::uint32_t value) const {
    if (value >= entries_.size()) throw Error("unknown entity id");
    return entries_[value].kind;
}

EntityId EntityTable::id_at(std::uint32_t value) const {
    return EntityId{value, kind_of(value)};
}

std::vector<EntityId> EntityTable::all(std::optional<EntityKind> kind) const {
    std::vector<EntityId> out;
    for (std::uint32_t v = 0; v < entries_.size(); ++v) {
        if (!kind || entries_[v].kind == *kind) out.push_back(EntityId{v, entries_[v].kind});
    }
    return out;
}

namespace {

inline std::uint64_t rotl(std::uint64_t x, int b) { return (x << b) | (x >> (64 - b)); }

inline void sipround(std::uint64_t& v0, std::uint64_t& v1, std::uint64_t& v2, std::uint64_t& v3) {
    v0 += v1;
    v1 = rotl(v1, 13);
    v1 ^= v0;
    v0 = rotl(v0, 32);
    v2 += v3;
    v3 = rotl(v3, 16);
    v3 ^= v2;
    v0 += v3;
    v3 = rotl(v3, 21);
    v3 ^= v0;
    v2 += v1;
    v1 = rotl(v1, 17);
    v1 ^= v2;
    v2 = rotl(v2, 32);
}

}  // namespace

std::uint64_t siphash24(std::uint64_t k0, std::uint64_t k1, std::span<const std::uint8_t> data) {
    std::uint64_t v0 = 0x736f6d6570736575ull ^ k0;
    std::uint64_t v1 = 0x646f72616e646f6dull ^ k1;
    std::uint64_t v2 = 0x6c7967656e657261ull ^ k0;
    std::uint64_t v3 = 0x7465646279746573ull ^ k1;

    const std::size_t n = data.size();
    const std::size_t end = n - (n % 8);
    for (std::size_t i = 0; i < end; i += 8) {
        std::uint64_t m = 0;
        for (int j = 7; j >= 0; --j) m = (m << 8) | data[i + static_cast<std::size_t>(j)];
        v3 ^= m;
        sipround(v0, v1, v2, v3);
        sipround(v0, v1, v2, v3);
        v0 ^= m;
    }

    std::uint64_t last = static_cast<std::uint64_t>(n & 0xff) << 56;
    for (std::size_t i = end; i < n; ++i) last |= static_cast<std::uint64_t>(data[i]) << (8 * (i - end));
    v3 ^= last;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    v0 ^= last;

    v2 ^= 0xff;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    return v0 ^ v1 ^ v2 ^ v3;
}

namespace {

constexpr std::uint64_t kPkDomain0 = 0x706b2d64657269ull;   // "pk-deri"
constexpr std::uint64_t kPkDomain1 = 0x76652d74776f00ull;   // "ve-two"
constexpr std::uint64_t kTagTweak0 = 0x7461672d686928ull;
constexpr std::uint64_t kTagTweak1 = 0x7461672d6c6f77ull;

}  // namespace

KeyPair MacSignatureScheme::generate(std::mt19937_64& rng) {
    KeyPair kp;
    kp.sec.k0 = rng();
    kp.sec.k1 = rng();
    const std::uint8_t d0[1] = {0};
    const std::uint8_t d1[1] = {1};
    kp.pub.a = siphash24(kp.sec.k0 ^ kPkDomain0, kp.sec.k1 ^ kPkDomain1, d0);
    kp.pub.b = siphash24(kp.sec.k0 ^ kPkDomain0, kp.sec.k1 ^ kPkDomain1, d1);
    registered_[kp.pub] = kp.sec;
    return kp;
}

Signature MacSignatureScheme::sign(EntityId signer, const PrivateKey& key,
                                   std::span<const std::uint8_t> payload) const {
    Signature sig;
    sig.signer = signer;
    sig.tag_lo = siphash24(key.k0, key.k1, payload);
    sig.tag_hi = siphash24(key.k0 ^ kTagTweak0, key.k1 ^ kTagTweak1, payload);
    return sig;
}

bool MacSignatureScheme::verify(std::span<const std::uint8_t> payload, const Signature& sig,
                                const PublicKey& key) const {
    auto it = registered_.find(key);
    if (it == registered_.end()) return false;
    const PrivateKey& sec = it->second;
    return sig.tag_lo == siphash24(sec.k0, sec.k1, payload) &&
           sig.tag_hi == siphash24(sec.k0 ^ kTagTweak0, sec.k1 ^ kTagTweak1, payload);
}

const KeyPair& KeyStore::get(EntityId id) const {
    auto it = keys_.find(id.value);
    if (it == keys_.end()) throw Error("no key material for entity id " + std::to_string(id.value));
    return it->second;
}

GeneratedIdentity generate_identity(EntityTable& table, SignatureScheme& scheme, EntityKind kind,
                                    std::mt19937_64& rng, std::string_view name_hint) {
    std::string name;
    if (!name_hint.empty()) {
        name = std::string(name_hint);
    } else {
        name = std::string(to_string(kind)) + "-" + std::to_string(table.size());
    }
    EntityId id = table.intern(name, kind);
    return GeneratedIdentity{id, scheme.generate(rng)};
}

void Authority::record_revocation(Revocation rev) {
    if (is_revoked(rev.revoked)) return;  // monotone, first evidence wins
    revoked_.insert(rev.revoked.value);
    log_.push_back(std::move(rev));
}

void Authority::export_revocations_csv(std::string& out) const {
    out += "time,revoked_id,evidence_kind\n";
    for (const Revocation& r : log_) {
        out += std::to_string(r.time);
        out += ',';
        out += std::to_string(r.revoked.value);
        out += ',';
        out += r.evidence_kind;
        out += '\n';
    }
}

WorldKeys make_world_keys(EntityTable& table, std::uint64_t seed) {
    WorldKeys w;
    w.authority_id = table.intern(kAuthorityName, EntityKind::Authority);
    std::mt19937_64 rng(mix64(seed, 0x6b65797331ull));
    for (EntityId id : table.all()) {
        KeyPair kp = w.scheme.generate(rng);
        w.keys.put(id, kp);
        w.directory.put(id, kp.pub);
    }
    return w;
}

}  // namespace clonesim
