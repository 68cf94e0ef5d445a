#include <random>

#include "clonesim/identity.hpp"
#include "doctest.h"

using namespace clonesim;

TEST_CASE("identity generation is deterministic under a fixed seed") {
    EntityTable t1;
    MacSignatureScheme s1;
    std::mt19937_64 rng1(7);
    auto a = generate_identity(t1, s1, EntityKind::MobileNode, rng1);

    EntityTable t2;
    MacSignatureScheme s2;
    std::mt19937_64 rng2(7);
    auto b = generate_identity(t2, s2, EntityKind::MobileNode, rng2);

    CHECK(a.id == b.id);
    CHECK(t1.name(a.id) == t2.name(b.id));
    CHECK(a.keys.pub == b.keys.pub);
    CHECK(a.keys.sec.k0 == b.keys.sec.k0);
    CHECK(a.keys.sec.k1 == b.keys.sec.k1);
}

TEST_CASE("successive identities are distinct") {
    EntityTable table;
    MacSignatureScheme scheme;
    std::mt19937_64 rng7(7);
    std::mt19937_64 rng8(8);
    auto a = generate_identity(table, scheme, EntityKind::MobileNode, rng7);
    auto b = generate_identity(table, scheme, EntityKind::MobileNode, rng8);
    CHECK(a.id != b.id);
    CHECK_FALSE(a.keys.pub == b.keys.pub);
}

TEST_CASE("entity kind round-trips") {
    EntityTable table;
    MacSignatureScheme scheme;
    std::mt19937_64 rng(1);
    auto ca = generate_identity(table, scheme, EntityKind::Authority, rng);
    CHECK(ca.id.kind == EntityKind::Authority);
    CHECK(table.kind_of(ca.id.value) == EntityKind::Authority);
}

TEST_CASE("a name cannot change kind") {
    EntityTable table;
    table.intern("x", EntityKind::MobileNode);
    CHECK_THROWS_AS(table.intern("x", EntityKind::AccessPoint), ConfigError);
}

TEST_CASE("signature soundness and completeness over random payloads") {
    EntityTable table;
    MacSignatureScheme scheme;
    std::mt19937_64 rng(99);
    auto alice = generate_identity(table, scheme, EntityKind::MobileNode, rng);
    auto bob = generate_identity(table, scheme, EntityKind::MobileNode, rng);

    std::mt19937_64 data_rng(123);
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<std::uint8_t> payload(1 + data_rng() % 64);
        for (auto& byte : payload) byte = static_cast<std::uint8_t>(data_rng());

        Signature sig = scheme.sign(alice.id, alice.keys.sec, payload);
        CHECK(scheme.verify(payload, sig, alice.keys.pub));
        CHECK_FALSE(scheme.verify(payload, sig, bob.keys.pub));

        auto mutated = payload;
        mutated[data_rng() % mutated.size()] ^= static_cast<std::uint8_t>(1 + data_rng() % 255);
        CHECK_FALSE(scheme.verify(mutated, sig, alice.keys.pub));
    }
}

TEST_CASE("malformed signatures fail verification without crashing") {
    EntityTable table;
    MacSignatureScheme scheme;
    std::mt19937_64 rng(5);
    auto alice = generate_identity(table, scheme, EntityKind::MobileNode, rng);
    std::vector<std::uint8_t> payload{1, 2, 3};

    Signature junk;
    junk.signer = alice.id;
    junk.tag_lo = 0xdeadbeef;
    junk.tag_hi = 0;
    CHECK_FALSE(scheme.verify(payload, junk, alice.keys.pub));

    PublicKey unknown{1, 2};
    Signature sig = scheme.sign(alice.id, alice.keys.sec, payload);
    CHECK_FALSE(scheme.verify(payload, sig, unknown));
}

TEST_CASE("revocation is monotone and exports as CSV") {
    EntityTable table;
    MacSignatureScheme scheme;
    std::mt19937_64 rng(3);
    auto ca = generate_identity(table, scheme, EntityKind::Authority, rng);
    auto node = generate_identity(table, scheme, EntityKind::MobileNode, rng);

    Authority authority(ca.id, ca.keys, scheme);
    CHECK_FALSE(authority.is_revoked(node.id));

    Revocation rev;
    rev.revoked = node.id;
    rev.time = 42;
    rev.evidence_kind = "conflicting-marks";
    authority.record_revocation(rev);
    CHECK(authority.is_revoked(node.id));

    authority.record_revocation(rev);  // duplicate reports do not pile up
    CHECK(authority.revocation_log().size() == 1);

    std::string csv;
    authority.export_revocations_csv(csv);
    CHECK(csv == "time,revoked_id,evidence_kind\n42," + std::to_string(node.id.value) +
                     ",conflicting-marks\n");
}

TEST_CASE("world keys cover every table entity plus the authority") {
    EntityTable table;
    table.intern("n1", EntityKind::MobileNode);
    table.intern("ap1", EntityKind::AccessPoint);
    WorldKeys world = make_world_keys(table, 11);
    CHECK(world.authority_id.kind == EntityKind::Authority);
    for (EntityId id : table.all()) {
        CHECK(world.keys.has(id));
        CHECK(world.directory.find(id) != nullptr);
    }

    // same seed, same table contents -> identical key material
    EntityTable table2;
    table2.intern("n1", EntityKind::MobileNode);
    table2.intern("ap1", EntityKind::AccessPoint);
    WorldKeys world2 = make_world_keys(table2, 11);
    for (EntityId id : table.all())
        CHECK(world.directory.find(id)->a == world2.directory.find(id)->a);
}
