#pragma once

#include <cstddef>
#include <map>
#include <unordered_map>
#include <vector>

#include "clonesim/trace.hpp"

namespace clonesim {

// Social graph over mobile nodes; an edge means the pair met on at least
// `min_days` distinct days during training, and its weight is that count.
class SocialGraph {
public:
    static SocialGraph from_edges(std::vector<EntityId> vertices,
                                  std::map<std::pair<std::uint32_t, std::uint32_t>, int> weights);

    const std::vector<EntityId>& vertices() const { return vertices_; }
    const std::vector<std::vector<int>>& adjacency() const { return adj_; }
    const std::map<std::pair<std::uint32_t, std::uint32_t>, int>& weights() const { return weights_; }
    std::size_t vertex_count() const { return vertices_.size(); }
    std::size_t edge_count() const { return weights_.size(); }
    int index_of(EntityId id) const;

private:
    std::vector<EntityId> vertices_;                             // sorted by id
    std::vector<std::vector<int>> adj_;                          // sorted neighbor indices
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> weights_;  // (lo,hi) -> days
    std::unordered_map<std::uint32_t, int> index_;
};

SocialGraph build_social_graph(const ContactTrace& training, int min_days);

struct Community {
    std::vector<EntityId> members;  // sorted
};

class CliqueBudgetExceeded : public Error {
public:
    using Error::Error;
};

// Clique-percolation communities: unions of k-cliques chained through
// (k-1)-node overlaps. Computed from maximal cliques (Bron-Kerbosch),
// joining maximal cliques of size >= k that share >= k-1 vertices; this
// yields the same components as percolating over all k-cliques directly.
// Output is deterministic: member lists sorted, communities ordered
// lexicographically. Throws CliqueBudgetExceeded past `max_cliques`.
std::vector<Community> k_clique_communities(const SocialGraph& graph, int k,
                                            std::size_t max_cliques = 2'000'000);

// node -> union of members of all communities containing it, minus itself.
class CommunityIndex {
public:
    explicit CommunityIndex(const std::vector<Community>& communities);
    const std::vector<EntityId>& neighbors_of(EntityId node) const;
    bool contains(EntityId node) const { return by_node_.count(node.value) != 0; }
    std::vector<EntityId> nodes() const;

private:
    std::unordered_map<std::uint32_t, std::vector<EntityId>> by_node_;
    std::vector<EntityId> members_;
    std::vector<EntityId> empty_;
};

std::vector<EntityId> community_of(EntityId node, const std::vector<Community>& communities);

}  // namespace clonesim
