#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace wsnad {

enum class AdjacencyKind { kMode, kTime, kNode };

const char* to_string(AdjacencyKind kind);

/// Square relation matrix. Row i lists the neighbours of vertex i; every row
/// has at least one nonzero entry.
struct Adjacency {
  AdjacencyKind kind = AdjacencyKind::kNode;
  Tensor entries;
  bool symmetric = false;

  std::size_t extent() const { return entries.rows(); }
  /// True when some entry is neither 0 nor 1.
  bool weighted() const;
};

/// Validates and wraps `entries`. Correlation (mode) entries must lie in
/// [-1, 1]; time and node entries must be 0 or 1.
Adjacency make_adjacency(AdjacencyKind kind, Tensor entries);

struct Correlation {
  double value = 0.0;
  bool degenerate = false;  // one of the series had zero variance
};

Correlation pearson(std::span<const double> p, std::span<const double> q);

/// Mode adjacency from per-mode series (N x L). Without dependency sets the
/// result is the all-ones matrix. With `deps`, deps[i] lists the modes that
/// mode i depends on and entry (i, j) = rho(V_i, V_j) for j in deps[i].
Adjacency mode_adjacency(const Tensor& series,
                         const std::optional<std::vector<std::vector<std::size_t>>>& deps = std::nullopt);

/// Every timestamp neighbours every other one, never itself.
Adjacency time_adjacency(std::size_t window);

Adjacency node_adjacency_full(std::size_t nodes);

struct NodeCoordinates {
  std::vector<int> ids;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const { return ids.size(); }
  std::optional<std::size_t> find(int id) const;
  /// Rows for `ids` in that order; kMissingNode when one is absent.
  NodeCoordinates select(std::span<const int> wanted) const;
};

/// Each node links to its k nearest nodes by Euclidean distance plus itself.
/// Distance ties are broken by ascending node id.
Adjacency node_adjacency_topk(const NodeCoordinates& coords, std::size_t k);

}  // namespace wsnad
