#include "anonsched/clustering.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "anonsched/rng.hpp"

namespace anonsched {

BehaviorVector mode_head(std::span<const BehaviorVector> members) {
    if (members.empty()) throw std::invalid_argument("mode_head: empty member list");
    int w = members[0].width();
    std::vector<int> ones(static_cast<std::size_t>(w), 0);
    for (const BehaviorVector& v : members) {
        if (v.width() != w) throw std::invalid_argument("mode_head: vector widths differ");
        for (int l = 0; l < w; ++l) ones[static_cast<std::size_t>(l)] += v.test(l);
    }
    BehaviorVector head(w);
    for (int l = 0; l < w; ++l) {
        // Strict majority; a tie leaves the slot at 0.
        head.set(l, 2 * ones[static_cast<std::size_t>(l)] > static_cast<int>(members.size()));
    }
    return head;
}

KModesResult kmodes_from_heads(const VectorsById& input,
                               std::vector<BehaviorVector> heads, int max_iterations) {
    const std::size_t n = input.size();
    const std::size_t k = heads.size();
    if (k == 0 || k > n) throw std::invalid_argument("kmodes: need 1 <= k <= n");
    if (max_iterations < 1) throw std::invalid_argument("kmodes: max_iterations must be >= 1");

    KModesResult result;
    std::vector<int> assign(n, -1);
    std::vector<int> prev_assign;

    for (int iter = 0; iter < max_iterations; ++iter) {
        prev_assign = assign;

        long long cost = 0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            int best_d = smc_distance(input.vectors[i], heads[0]);
            for (std::size_t c = 1; c < k; ++c) {
                int d = smc_distance(input.vectors[i], heads[c]);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            assign[i] = best;
            cost += best_d;
        }
        ++result.iterations;
        result.cost_history.push_back(cost);

        std::vector<std::vector<BehaviorVector>> grouped(k);
        for (std::size_t i = 0; i < n; ++i) {
            grouped[static_cast<std::size_t>(assign[i])].push_back(input.vectors[i]);
        }
        bool heads_changed = false;
        for (std::size_t c = 0; c < k; ++c) {
            if (grouped[c].empty()) continue;  // empty cluster keeps its last head
            BehaviorVector h = mode_head(grouped[c]);
            if (!(h == heads[c])) {
                heads[c] = std::move(h);
                heads_changed = true;
            }
        }
        if (!heads_changed && assign == prev_assign) {
            result.converged = true;
            break;
        }
    }

    std::vector<Cluster> clusters(k);
    for (std::size_t c = 0; c < k; ++c) clusters[c].head = heads[c];
    for (std::size_t i = 0; i < n; ++i) {
        clusters[static_cast<std::size_t>(assign[i])].members.push_back(input.ids[i]);
    }
    for (Cluster& c : clusters) {
        std::sort(c.members.begin(), c.members.end());
        if (!c.members.empty()) result.clusters.push_back(std::move(c));
    }
    return result;
}

KModesResult kmodes(const VectorsById& input, const ClusteringConfig& cfg) {
    const std::size_t n = input.size();
    if (cfg.k < 1 || static_cast<std::size_t>(cfg.k) > n) {
        throw std::invalid_argument("kmodes: need 1 <= k <= number of pseudonyms");
    }
    // Sample k distinct pseudonyms; duplicate vectors are fine as heads.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::Engine eng(cfg.rng_seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.k); ++i) {
        std::size_t j = i + static_cast<std::size_t>(eng.below(n - i));
        std::swap(order[i], order[j]);
    }
    std::vector<BehaviorVector> heads;
    heads.reserve(static_cast<std::size_t>(cfg.k));
    for (int c = 0; c < cfg.k; ++c) {
        heads.push_back(input.vectors[order[static_cast<std::size_t>(c)]]);
    }
    return kmodes_from_heads(input, std::move(heads), cfg.max_iterations);
}

std::vector<Cluster> random_grouping(const VectorsById& input, int k, std::uint64_t rng_seed) {
    const std::size_t n = input.size();
    if (k < 1 || static_cast<std::size_t>(k) > n) {
        throw std::invalid_argument("random_grouping: need 1 <= k <= number of pseudonyms");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::Engine eng(rng_seed);
    eng.shuffle(order);

    std::vector<Cluster> clusters(static_cast<std::size_t>(k));
    std::vector<std::vector<BehaviorVector>> grouped(static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t c = j % static_cast<std::size_t>(k);
        clusters[c].members.push_back(input.ids[order[j]]);
        grouped[c].push_back(input.vectors[order[j]]);
    }
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        clusters[c].head = mode_head(grouped[c]);
        std::sort(clusters[c].members.begin(), clusters[c].members.end());
    }
    return clusters;
}

long long clustering_cost(const std::vector<Cluster>& clusters, const VectorsById& input) {
    std::size_t max_id = 0;
    for (PseudonymId p : input.ids) max_id = std::max(max_id, idx(p));
    std::vector<const BehaviorVector*> lookup(max_id + 1, nullptr);
    for (std::size_t i = 0; i < input.size(); ++i) lookup[idx(input.ids[i])] = &input.vectors[i];

    long long cost = 0;
    for (const Cluster& c : clusters) {
        for (PseudonymId p : c.members) {
            const BehaviorVector* v = lookup[idx(p)];
            require(v != nullptr, "clustering_cost: member without a vector");
            cost += smc_distance(*v, c.head);
        }
    }
    return cost;
}

void write_clusters_csv(std::ostream& out, const std::vector<Cluster>& clusters) {
    out << "cluster_id,pseudonym_id\n";
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (PseudonymId p : clusters[c].members) {
            out << c << ',' << idx(p) << '\n';
        }
    }
}

void write_heads_csv(std::ostream& out, const std::vector<Cluster>& clusters) {
    out << "cluster_id,head_bits\n";
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        out << c << ',' << clusters[c].head.to_string() << '\n';
    }
}

}  // namespace anonsched
