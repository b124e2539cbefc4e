#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

#include "mfg_lattice/grid.hpp"

namespace mfgl {

namespace {

// Successive shortest paths on the bipartite transport network
// source -> supply i -> demand j -> sink, with real-valued capacities.
class MinCostFlow {
public:
    explicit MinCostFlow(std::size_t nodes) : adj_(nodes) {}

    void add_arc(std::size_t from, std::size_t to, double cap, double cost) {
        adj_[from].push_back(arcs_.size());
        arcs_.push_back({to, cap, cost});
        adj_[to].push_back(arcs_.size());
        arcs_.push_back({from, 0.0, -cost});
    }

    // Returns (flow, cost).
    std::pair<double, double> run(std::size_t s, std::size_t t, double target, double eps) {
        double flow = 0.0, cost = 0.0;
        const std::size_t nodes = adj_.size();
        constexpr double inf = std::numeric_limits<double>::infinity();
        while (flow < target - eps) {
            std::vector<double> dist(nodes, inf);
            std::vector<std::size_t> via(nodes, npos);
            std::vector<char> queued(nodes, 0);
            std::deque<std::size_t> queue{s};
            dist[s] = 0.0;
            queued[s] = 1;
            while (!queue.empty()) {
                const std::size_t v = queue.front();
                queue.pop_front();
                queued[v] = 0;
                for (std::size_t id : adj_[v]) {
                    const Arc& a = arcs_[id];
                    if (a.cap <= eps) continue;
                    const double nd = dist[v] + a.cost;
                    if (nd < dist[a.to] - 1e-15) {
                        dist[a.to] = nd;
                        via[a.to] = id;
                        if (!queued[a.to]) {
                            queued[a.to] = 1;
                            queue.push_back(a.to);
                        }
                    }
                }
            }
            if (via[t] == npos) break;
            double push = target - flow;
            for (std::size_t v = t; v != s; v = arcs_[via[v] ^ 1].to) push = std::min(push, arcs_[via[v]].cap);
            for (std::size_t v = t; v != s; v = arcs_[via[v] ^ 1].to) {
                arcs_[via[v]].cap -= push;
                arcs_[via[v] ^ 1].cap += push;
            }
            flow += push;
            cost += push * dist[t];
        }
        return {flow, cost};
    }

private:
    struct Arc {
        std::size_t to;
        double cap;
        double cost;
    };
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::vector<std::size_t>> adj_;
    std::vector<Arc> arcs_;
};

}  // namespace

double w1_lp_oracle(const DiscreteMeasure& m1, const DiscreteMeasure& m2) {
    const std::size_t n = m1.size();
    require(n == m2.size(), "w1_lp_oracle: measures live on different grids");
    require(n <= 64, "w1_lp_oracle: oracle limited to n <= 64");
    const GridSpec g(n);
    const std::size_t source = 2 * n, sink = 2 * n + 1;
    MinCostFlow net(2 * n + 2);
    for (std::size_t i = 0; i < n; ++i) {
        net.add_arc(source, i, m1[i], 0.0);
        net.add_arc(n + i, sink, m2[i], 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            net.add_arc(i, n + j, 2.0, torus_distance(g.position(i), g.position(j)));
        }
    }
    const double total = std::min(std::accumulate(m1.weights().begin(), m1.weights().end(), 0.0),
                                  std::accumulate(m2.weights().begin(), m2.weights().end(), 0.0));
    const auto [flow, cost] = net.run(source, sink, total, 1e-15);
    if (flow < total - 1e-12) {
        throw NumericalError("w1_lp_oracle: transport network did not route all mass");
    }
    return cost;
}

}  // namespace mfgl
