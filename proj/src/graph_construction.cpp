#include "dstf/graph.hpp"

#include "dstf/errors.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace dstf {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n\"");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n\"");
    return s.substr(b, e - b + 1);
}

std::size_t parse_index(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size() || v < 0) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw DataError("distance list line " + std::to_string(line) + ": invalid node id '" + s + "'");
    }
}

void check_ids(const DistanceList& list, std::size_t nodes) {
    for (const auto& e : list) {
        if (e.from >= nodes || e.to >= nodes) {
            throw DataError("edge (" + std::to_string(e.from) + ", " + std::to_string(e.to) + ") outside [0, " +
                            std::to_string(nodes) + ")");
        }
    }
}

}  // namespace

DistanceList read_distance_csv(const std::filesystem::path& path,
                               const std::unordered_map<std::string, std::size_t>* id_map) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    DistanceList out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        if (cells.size() < 3) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected from,to,cost");
        if (lineno == 1 && cells[0] == "from") continue;
        DistanceEntry e;
        if (id_map != nullptr) {
            auto f = id_map->find(cells[0]);
            auto t = id_map->find(cells[1]);
            if (f == id_map->end() || t == id_map->end()) continue;
            e.from = f->second;
            e.to = t->second;
        } else {
            e.from = parse_index(cells[0], lineno);
            e.to = parse_index(cells[1], lineno);
        }
        try {
            e.cost = std::stod(cells[2]);
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": invalid cost '" + cells[2] + "'");
        }
        if (!std::isfinite(e.cost) || e.cost < 0.0) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": cost must be finite and nonnegative");
        }
        out.push_back(e);
    }
    return out;
}

Matrix gaussian_kernel_adjacency(const DistanceList& distances, std::size_t nodes, double kappa) {
    if (nodes == 0) throw ConfigError("graph needs at least one node");
    if (!(kappa >= 0.0 && kappa < 1.0)) throw ConfigError("kappa must lie in [0, 1)");
    check_ids(distances, nodes);
    const auto n = static_cast<ad::Index>(nodes);
    Matrix a = Matrix::Zero(n, n);
    if (distances.empty()) return a;
    double mean = 0.0;
    for (const auto& e : distances) mean += e.cost;
    mean /= static_cast<double>(distances.size());
    double var = 0.0;
    for (const auto& e : distances) var += (e.cost - mean) * (e.cost - mean);
    var /= static_cast<double>(distances.size());
    const double sigma = std::sqrt(var);
    if (!(sigma > 0.0)) throw DataError("Gaussian kernel undefined: all listed costs are equal (sigma = 0)");
    for (const auto& e : distances) {
        const double w = std::exp(-(e.cost * e.cost) / (sigma * sigma));
        a(static_cast<ad::Index>(e.from), static_cast<ad::Index>(e.to)) = w < kappa ? 0.0 : w;
    }
    return a;
}

Matrix connectivity_adjacency(const DistanceList& edges, std::size_t nodes) {
    check_ids(edges, nodes);
    const auto n = static_cast<ad::Index>(nodes);
    Matrix a = Matrix::Zero(n, n);
    for (const auto& e : edges) a(static_cast<ad::Index>(e.from), static_cast<ad::Index>(e.to)) = 1.0;
    return a;
}

Matrix threshold(const Matrix& a, double kappa) { return (a.array() < kappa).select(0.0, a); }

Matrix row_normalize(const Matrix& a) {
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    for (ad::Index r = 0; r < a.rows(); ++r) {
        const double s = a.row(r).sum();
        if (s != 0.0) out.row(r) = a.row(r) / s;
    }
    return out;
}

TransitionSet transition_matrices(const Matrix& adjacency) {
    if (adjacency.rows() != adjacency.cols()) throw DataError("adjacency matrix must be square");
    if ((adjacency.array() < 0.0).any()) throw DataError("adjacency weights must be nonnegative");
    return TransitionSet{row_normalize(adjacency), row_normalize(adjacency.transpose())};
}

std::size_t count_nonzero(const Matrix& a) {
    return static_cast<std::size_t>((a.array() != 0.0).count());
}

std::vector<std::size_t> connected_subgraph(const Matrix& adjacency, std::size_t seed, std::size_t count) {
    const auto n = static_cast<std::size_t>(adjacency.rows());
    if (seed >= n) throw DataError("seed node out of range");
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> order;
    std::deque<std::size_t> queue{seed};
    seen[seed] = true;
    while (!queue.empty() && order.size() < count) {
        const auto u = queue.front();
        queue.pop_front();
        order.push_back(u);
        for (std::size_t v = 0; v < n; ++v) {
            const bool linked = adjacency(static_cast<ad::Index>(u), static_cast<ad::Index>(v)) != 0.0 ||
                                adjacency(static_cast<ad::Index>(v), static_cast<ad::Index>(u)) != 0.0;
            if (linked && !seen[v]) {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    return order;
}

Matrix induced_submatrix(const Matrix& a, const std::vector<std::size_t>& nodes) {
    const auto k = static_cast<ad::Index>(nodes.size());
    Matrix out(k, k);
    for (ad::Index i = 0; i < k; ++i) {
        for (ad::Index j = 0; j < k; ++j) {
            out(i, j) = a(static_cast<ad::Index>(nodes[static_cast<std::size_t>(i)]),
                          static_cast<ad::Index>(nodes[static_cast<std::size_t>(j)]));
        }
    }
    return out;
}

}  // namespace dstf
