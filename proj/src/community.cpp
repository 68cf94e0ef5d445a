#include "clonesim/community.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace clonesim {

SocialGraph SocialGraph::from_edges(std::vector<EntityId> vertices,
                                    std::map<std::pair<std::uint32_t, std::uint32_t>, int> weights) {
    SocialGraph g;
    std::sort(vertices.begin(), vertices.end());
    vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
    g.vertices_ = std::move(vertices);
    for (std::size_t i = 0; i < g.vertices_.size(); ++i)
        g.index_[g.vertices_[i].value] = static_cast<int>(i);
    g.adj_.assign(g.vertices_.size(), {});
    for (const auto& [pair, w] : weights) {
        auto ia = g.index_.find(pair.first);
        auto ib = g.index_.find(pair.second);
        if (ia == g.index_.end() || ib == g.index_.end())
            throw Error("edge endpoint missing from vertex set");
        if (pair.first == pair.second) throw Error("self-loop in social graph");
        g.adj_[static_cast<std::size_t>(ia->second)].push_back(ib->second);
        g.adj_[static_cast<std::size_t>(ib->second)].push_back(ia->second);
    }
    for (auto& nbrs : g.adj_) std::sort(nbrs.begin(), nbrs.end());
    g.weights_ = std::move(weights);
    return g;
}

int SocialGraph::index_of(EntityId id) const {
    auto it = index_.find(id.value);
    return it == index_.end() ? -1 : it->second;
}

SocialGraph build_social_graph(const ContactTrace& training, int min_days) {
    if (min_days < 1) throw ConfigError("min_days must be >= 1");
    const Timestamp origin = training.span().begin;

    // Events are start-sorted, so per pair the day index never decreases and
    // one (last_day, count) cell per pair suffices.
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<int, int>> day_counts;
    for (const ContactEvent& ev : training.events()) {
        if (ev.a.kind != EntityKind::MobileNode || ev.b.kind != EntityKind::MobileNode) continue;
        const int d = day_index(ev.start, origin);
        auto [it, inserted] = day_counts.try_emplace({ev.a.value, ev.b.value}, std::pair(d, 1));
        if (!inserted && it->second.first != d) {
            it->second.first = d;
            ++it->second.second;
        }
    }

    std::map<std::pair<std::uint32_t, std::uint32_t>, int> weights;
    std::vector<EntityId> vertices;
    for (EntityId id : training.entities())
        if (id.kind == EntityKind::MobileNode) vertices.push_back(id);
    for (const auto& [pair, dc] : day_counts)
        if (dc.second >= min_days) weights[pair] = dc.second;
    return SocialGraph::from_edges(std::move(vertices), std::move(weights));
}

namespace {

// Bron-Kerbosch with pivoting over sorted index vectors.
class MaximalCliqueFinder {
public:
    MaximalCliqueFinder(const std::vector<std::vector<int>>& adj, std::size_t budget)
        : adj_(adj), budget_(budget) {}

    std::vector<std::vector<int>> run() {
        std::vector<int> all(adj_.size());
        std::iota(all.begin(), all.end(), 0);
        std::vector<int> r;
        expand(r, all, {});
        return std::move(cliques_);
    }

private:
    static std::vector<int> intersect(const std::vector<int>& sorted, const std::vector<int>& nbrs) {
        std::vector<int> out;
        std::set_intersection(sorted.begin(), sorted.end(), nbrs.begin(), nbrs.end(),
                              std::back_inserter(out));
        return out;
    }

    void expand(std::vector<int>& r, std::vector<int> p, std::vector<int> x) {
        if (p.empty() && x.empty()) {
            if (cliques_.size() >= budget_)
                throw CliqueBudgetExceeded("maximal clique budget exceeded (" +
                                           std::to_string(budget_) + ")");
            cliques_.push_back(r);
            return;
        }
        // pivot: vertex of P (union) X covering most of P
        int pivot = -1;
        std::size_t best = 0;
        for (const auto* side : {&p, &x}) {
            for (int u : *side) {
                std::size_t covered = intersect(p, adj_[static_cast<std::size_t>(u)]).size();
                if (pivot == -1 || covered > best) {
                    pivot = u;
                    best = covered;
                }
            }
        }
        std::vector<int> candidates;
        if (pivot >= 0) {
            const auto& pn = adj_[static_cast<std::size_t>(pivot)];
            std::set_difference(p.begin(), p.end(), pn.begin(), pn.end(),
                                std::back_inserter(candidates));
        } else {
            candidates = p;
        }
        for (int v : candidates) {
            const auto& nv = adj_[static_cast<std::size_t>(v)];
            r.push_back(v);
            expand(r, intersect(p, nv), intersect(x, nv));
            r.pop_back();
            p.erase(std::lower_bound(p.begin(), p.end(), v));
            auto pos = std::lower_bound(x.begin(), x.end(), v);
            x.insert(pos, v);
        }
    }

    const std::vector<std::vector<int>>& adj_;
    std::size_t budget_;
    std::vector<std::vector<int>> cliques_;
};

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            parent[static_cast<std::size_t>(v)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
            v = parent[static_cast<std::size_t>(v)];
        }
        return v;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(a)] = b;
    }
};

std::size_t overlap_size(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t n = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++n;
            ++ia;
            ++ib;
        }
    }
    return n;
}

}  // namespace

std::vector<Community> k_clique_communities(const SocialGraph& graph, int k,
                                            std::size_t max_cliques) {
    if (k < 3) throw ConfigError("k-clique parameter must be >= 3");

    MaximalCliqueFinder finder(graph.adjacency(), max_cliques);
    std::vector<std::vector<int>> cliques = finder.run();

    std::vector<std::vector<int>> big;
    for (auto& c : cliques) {
        if (c.size() >= static_cast<std::size_t>(k)) {
            std::sort(c.begin(), c.end());
            big.push_back(std::move(c));
        }
    }
    if (big.empty()) return {};

    // Join maximal cliques sharing >= k-1 vertices; candidate pairs found
    // through a shared-vertex index.
    UnionFind uf(big.size());
    std::vector<std::vector<int>> cliques_at(graph.vertex_count());
    for (std::size_t ci = 0; ci < big.size(); ++ci)
        for (int v : big[ci]) cliques_at[static_cast<std::size_t>(v)].push_back(static_cast<int>(ci));
    std::set<std::pair<int, int>> tested;
    for (const auto& list : cliques_at) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            for (std::size_t j = i + 1; j < list.size(); ++j) {
                auto key = std::minmax(list[i], list[j]);
                if (!tested.insert(key).second) continue;
                if (overlap_size(big[static_cast<std::size_t>(key.first)],
                                 big[static_cast<std::size_t>(key.second)]) >=
                    static_cast<std::size_t>(k - 1))
                    uf.unite(key.first, key.second);
            }
        }
    }

    std::map<int, std::set<int>> members;  // component root -> vertex indices
    for (std::size_t ci = 0; ci < big.size(); ++ci) {
        int root = uf.find(static_cast<int>(ci));
        members[root].insert(big[ci].begin(), big[ci].end());
    }

    std::vector<Community> out;
    for (const auto& [root, verts] : members) {
        Community c;
        for (int v : verts) c.members.push_back(graph.vertices()[static_cast<std::size_t>(v)]);
        std::sort(c.members.begin(), c.members.end());
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const Community& a, const Community& b) {
        return std::lexicographical_compare(
            a.members.begin(), a.members.end(), b.members.begin(), b.members.end(),
            [](EntityId x, EntityId y) { return x.value < y.value; });
    });
    return out;
}

std::vector<EntityId> community_of(EntityId node, const std::vector<Community>& communities) {
    std::set<std::uint32_t> values;
    std::vector<EntityId> out;
    for (const Community& c : communities) {
        if (!std::binary_search(c.members.begin(), c.members.end(), node)) continue;
        for (EntityId m : c.members) {
            if (m == node) continue;
            if (values.insert(m.value).second) out.push_back(m);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

CommunityIndex::CommunityIndex(const std::vector<Community>& communities) {
    for (const Community& c : communities) {
        for (EntityId m : c.members) {
            auto& list = by_node_[m.value];
            for (EntityId other : c.members)
                if (other != m) list.push_back(other);
        }
    }
    for (auto& [node, list] : by_node_) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        members_.push_back(EntityId{node, EntityKind::MobileNode});
    }
    std::sort(members_.begin(), members_.end());
}

const std::vector<EntityId>& CommunityIndex::neighbors_of(EntityId node) const {
    auto it = by_node_.find(node.value);
    return it == by_node_.end() ? empty_ : it->second;
}

std::vector<EntityId> CommunityIndex::nodes() const { return members_; }

}  // namespace clonesim
