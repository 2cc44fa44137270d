#pragma once

// Road-network adjacency and static transition matrices.

#include "dstf/autodiff.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace dstf {

using ad::Matrix;

struct DistanceEntry {
    std::size_t from = 0;
    std::size_t to = 0;
    double cost = 0.0;
};

using DistanceList = std::vector<DistanceEntry>;

// Reads a `from,to,cost` CSV. With `id_map` the endpoints are external ids
// translated to node indices (rows naming unknown ids are skipped, as the
// public distance files list sensors outside the dataset); without it they
// must already be integer indices.
DistanceList read_distance_csv(const std::filesystem::path& path,
                               const std::unordered_map<std::string, std::size_t>* id_map = nullptr);

// A[i,j] = exp(-cost^2 / sigma^2) with sigma the population standard deviation of all
// listed costs; entries below kappa are zeroed, unlisted pairs are 0.
Matrix gaussian_kernel_adjacency(const DistanceList& distances, std::size_t nodes, double kappa = 0.1);

// A[i,j] = 1 iff (i, j) is listed.
Matrix connectivity_adjacency(const DistanceList& edges, std::size_t nodes);

// Zeroes entries below kappa.
Matrix threshold(const Matrix& a, double kappa);

struct TransitionSet {
    Matrix forward;   // A / rowsum(A)
    Matrix backward;  // A^T / rowsum(A^T)
};

// Rows with zero degree become zero rows.
Matrix row_normalize(const Matrix& a);
TransitionSet transition_matrices(const Matrix& adjacency);

std::size_t count_nonzero(const Matrix& a);

// Up to `count` nodes reachable from `seed` in breadth-first order, treating
// edges as undirected. Returns fewer when the component is smaller.
std::vector<std::size_t> connected_subgraph(const Matrix& adjacency, std::size_t seed, std::size_t count);

Matrix induced_submatrix(const Matrix& a, const std::vector<std::size_t>& nodes);

}  // namespace dstf
