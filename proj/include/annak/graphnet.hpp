#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace annak::graphnet {

enum class Group { Low, High };
enum class DyadCategory { LowLow, LowHigh, HighHigh };
enum class SplitMode { MedianSplit, EqualGroups };

std::string to_string(Group g);
std::string to_string(DyadCategory c);
DyadCategory dyad_category(Group a, Group b);

// Directed nomination network. Nodes keep input order; edges are deduplicated
// at construction and every endpoint must be a known node.
class SocialGraph {
public:
    static SocialGraph build(std::vector<std::string> nodes,
                             const std::vector<std::pair<std::string, std::string>>& edges,
                             std::map<std::string, std::string> community);

    const std::vector<std::string>& nodes() const { return nodes_; }
    std::size_t n_nodes() const { return nodes_.size(); }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::string& community_of(int node) const { return community_[node]; }
    std::vector<std::string> community_labels() const;

    int index_of(const std::string& name) const;  // throws input_error when unknown
    int find(const std::string& name) const;      // -1 when unknown
    bool has_edge(int from, int to) const;
    std::size_t duplicates_dropped() const { return duplicates_dropped_; }

private:
    std::vector<std::string> nodes_;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::string> community_;
    std::unordered_map<std::string, int> index_;
    std::unordered_set<std::uint64_t> edge_keys_;
    std::size_t duplicates_dropped_ = 0;
};

// Count of distinct nominators per node, aligned with graph.nodes().
std::vector<int> in_degree_centrality(const SocialGraph& graph);

struct SplitResult {
    std::vector<Group> group;     // per subject; meaningless where excluded
    std::vector<char> excluded;   // EqualGroups only: subjects at the median
    double median = 0.0;
};

SplitResult median_split(const std::vector<int>& in_degree, SplitMode mode);

// Subject-level centrality variables for one analysis sample.
struct CentralityProfile {
    std::vector<std::string> subjects;
    std::vector<int> in_degree;
    std::vector<Group> group;
    std::vector<char> excluded;
    std::vector<double> log_in_degree;  // ln(1 + in-degree)
    double median = 0.0;

    std::size_t n_in_group(Group g) const;
};

// Profile over a subject subset (the analysis sample); the median is taken
// over that subset, not the full survey graph.
CentralityProfile centrality_profile(const SocialGraph& graph,
                                     const std::vector<std::string>& sample, SplitMode mode);

struct DyadRow {
    int a = 0, b = 0;  // indices into the profile subject list, a < b
    DyadCategory category = DyadCategory::LowLow;
    int min_in_degree = 0;
    double log_min_in_degree = 0.0;
};

// One row per unordered pair of non-excluded subjects, (a, b) with a < b,
// ordered lexicographically by index.
std::vector<DyadRow> dyad_centrality_table(const CentralityProfile& profile);

// Unweighted geodesic distances between all pairs of members of one
// community. A tie exists when either member nominated the other. Pairs in
// different components get (max finite distance in the community) + 1.
std::map<std::pair<int, int>, int> social_distance(const SocialGraph& graph,
                                                   const std::string& community);

int friendship_indicator(const SocialGraph& graph, int a, int b);

}  // namespace annak::graphnet
