#include "annak/graphnet.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "annak/common.hpp"

namespace annak::graphnet {

std::string to_string(Group g) { return g == Group::High ? "High" : "Low"; }

std::string to_string(DyadCategory c) {
    switch (c) {
        case DyadCategory::HighHigh: return "HighHigh";
        case DyadCategory::LowHigh: return "LowHigh";
        default: return "LowLow";
    }
}

DyadCategory dyad_category(Group a, Group b) {
    const int highs = (a == Group::High ? 1 : 0) + (b == Group::High ? 1 : 0);
    if (highs == 2) return DyadCategory::HighHigh;
    if (highs == 1) return DyadCategory::LowHigh;
    return DyadCategory::LowLow;
}

namespace {
std::uint64_t edge_key(int from, int to) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(from)) << 32) |
           static_cast<std::uint32_t>(to);
}
}  // namespace

SocialGraph SocialGraph::build(std::vector<std::string> nodes,
                               const std::vector<std::pair<std::string, std::string>>& edges,
                               std::map<std::string, std::string> community) {
    SocialGraph g;
    g.nodes_ = std::move(nodes);
    for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
        if (!g.index_.emplace(g.nodes_[i], static_cast<int>(i)).second) {
            throw input_error("duplicate node: " + g.nodes_[i]);
        }
    }
    g.community_.resize(g.nodes_.size());
    for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
        auto it = community.find(g.nodes_[i]);
        if (it == community.end()) {
            throw input_error("node without community label: " + g.nodes_[i]);
        }
        g.community_[i] = it->second;
    }
    for (const auto& [name, label] : community) {
        if (!g.index_.count(name)) {
            throw input_error("community entry for unknown node: " + name);
        }
    }
    for (const auto& [from, to] : edges) {
        auto fit = g.index_.find(from);
        auto tit = g.index_.find(to);
        if (fit == g.index_.end() || tit == g.index_.end()) {
            throw input_error("edge references unknown node: " + from + " -> " + to);
        }
        if (fit->second == tit->second) {
            throw input_error("self-edge not allowed: " + from + " -> " + to);
        }
        if (g.edge_keys_.insert(edge_key(fit->second, tit->second)).second) {
            g.edges_.emplace_back(fit->second, tit->second);
        } else {
            ++g.duplicates_dropped_;
        }
    }
    if (g.duplicates_dropped_ > 0) {
        warn("dropped " + std::to_string(g.duplicates_dropped_) +
             " duplicate nomination(s)");
    }
    return g;
}

std::vector<std::string> SocialGraph::community_labels() const {
    std::set<std::string> labels(community_.begin(), community_.end());
    return {labels.begin(), labels.end()};
}

int SocialGraph::index_of(const std::string& name) const {
    const int idx = find(name);
    if (idx < 0) throw input_error("unknown subject: " + name);
    return idx;
}

int SocialGraph::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

bool SocialGraph::has_edge(int from, int to) const {
    return edge_keys_.count(edge_key(from, to)) > 0;
}

std::vector<int> in_degree_centrality(const SocialGraph& graph) {
    std::vector<int> degree(graph.n_nodes(), 0);
    for (const auto& [from, to] : graph.edges()) ++degree[to];
    return degree;
}

SplitResult median_split(const std::vector<int>& in_degree, SplitMode mode) {
    const std::size_t n = in_degree.size();
    if (n < 2) throw input_error("median split needs at least 2 subjects");
    for (int d : in_degree) {
        if (d < 0) throw input_error("negative in-degree");
    }
    if (std::all_of(in_degree.begin(), in_degree.end(),
                    [&](int d) { return d == in_degree.front(); })) {
        throw data_error("degenerate split: single group");
    }
    std::vector<int> sorted = in_degree;
    std::sort(sorted.begin(), sorted.end());
    const double median = (n % 2 == 1)
                              ? sorted[n / 2]
                              : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;

    SplitResult result;
    result.median = median;
    result.group.resize(n, Group::Low);
    result.excluded.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (mode == SplitMode::EqualGroups && in_degree[i] == median) {
            result.excluded[i] = 1;
            continue;
        }
        result.group[i] = in_degree[i] > median ? Group::High : Group::Low;
    }
    return result;
}

std::size_t CentralityProfile::n_in_group(Group g) const {
    std::size_t count = 0;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (!excluded[i] && group[i] == g) ++count;
    }
    return count;
}

CentralityProfile centrality_profile(const SocialGraph& graph,
                                     const std::vector<std::string>& sample, SplitMode mode) {
    const std::vector<int> full_degree = in_degree_centrality(graph);
    CentralityProfile profile;
    profile.subjects = sample;
    profile.in_degree.reserve(sample.size());
    for (const auto& name : sample) {
        profile.in_degree.push_back(full_degree[graph.index_of(name)]);
    }
    SplitResult split = median_split(profile.in_degree, mode);
    profile.group = std::move(split.group);
    profile.excluded = std::move(split.excluded);
    profile.median = split.median;
    profile.log_in_degree.reserve(sample.size());
    for (int d : profile.in_degree) {
        profile.log_in_degree.push_back(std::log1p(static_cast<double>(d)));
    }
    return profile;
}

std::vector<DyadRow> dyad_centrality_table(const CentralityProfile& profile) {
    std::vector<DyadRow> rows;
    const int n = static_cast<int>(profile.subjects.size());
    for (int a = 0; a < n; ++a) {
        if (profile.excluded[a]) continue;
        for (int b = a + 1; b < n; ++b) {
            if (profile.excluded[b]) continue;
            DyadRow row;
            row.a = a;
            row.b = b;
            row.category = dyad_category(profile.group[a], profile.group[b]);
            row.min_in_degree = std::min(profile.in_degree[a], profile.in_degree[b]);
            row.log_min_in_degree = std::log1p(static_cast<double>(row.min_in_degree));
            rows.push_back(row);
        }
    }
    return rows;
}

std::map<std::pair<int, int>, int> social_distance(const SocialGraph& graph,
                                                   const std::string& community) {
    std::vector<int> members;
    for (std::size_t i = 0; i < graph.n_nodes(); ++i) {
        if (graph.community_of(static_cast<int>(i)) == community) {
            members.push_back(static_cast<int>(i));
        }
    }
    if (members.empty()) throw input_error("empty community: " + community);

    // Undirected adjacency within the community; a single nomination in
    // either direction creates a tie.
    const std::size_t m = members.size();
    std::vector<int> local(graph.n_nodes(), -1);
    for (std::size_t i = 0; i < m; ++i) local[members[i]] = static_cast<int>(i);
    std::vector<std::vector<int>> adj(m);
    for (const auto& [from, to] : graph.edges()) {
        const int lf = local[from];
        const int lt = local[to];
        if (lf < 0 || lt < 0) continue;
        adj[lf].push_back(lt);
        adj[lt].push_back(lf);
    }

    const int kUnreached = -1;
    std::vector<std::vector<int>> dist(m, std::vector<int>(m, kUnreached));
    for (std::size_t src = 0; src < m; ++src) {
        auto& d = dist[src];
        d[src] = 0;
        std::deque<int> queue{static_cast<int>(src)};
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            for (int v : adj[u]) {
                if (d[v] == kUnreached) {
                    d[v] = d[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }

    int max_finite = 0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            max_finite = std::max(max_finite, dist[i][j]);
        }
    }
    const int disconnected_value = max_finite + 1;

    std::map<std::pair<int, int>, int> result;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const int value = dist[i][j] == kUnreached ? disconnected_value : dist[i][j];
            result[{members[i], members[j]}] = value;
        }
    }
    return result;
}

int friendship_indicator(const SocialGraph& graph, int a, int b) {
    return (graph.has_edge(a, b) || graph.has_edge(b, a)) ? 1 : 0;
}

}  // namespace annak::graphnet
