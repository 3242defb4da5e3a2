#include "graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace wsnad {

const char* to_string(AdjacencyKind kind) {
  switch (kind) {
    case AdjacencyKind::kMode: return "mode";
    case AdjacencyKind::kTime: return "time";
    case AdjacencyKind::kNode: return "node";
  }
  return "unknown";
}

bool Adjacency::weighted() const {
  return std::any_of(entries.data().begin(), entries.data().end(),
                     [](double v) { return v != 0.0 && v != 1.0; });
}

Adjacency make_adjacency(AdjacencyKind kind, Tensor entries) {
  if (entries.rank() != 2 || entries.rows() != entries.cols()) {
    fail(ErrorCode::kDimension, std::string(to_string(kind)) + " adjacency must be square, got " +
                                    to_string(entries.shape()));
  }
  const std::size_t n = entries.rows();
  bool symmetric = true;
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = entries(i, j);
      if (kind == AdjacencyKind::kMode) {
        if (!(v >= -1.0 && v <= 1.0)) {
          fail(ErrorCode::kInvalidArgument, "mode adjacency entry outside [-1, 1]");
        }
      } else if (v != 0.0 && v != 1.0) {
        fail(ErrorCode::kInvalidArgument, std::string(to_string(kind)) + " adjacency must be binary");
      }
      if (v != 0.0) any = true;
      if (v != entries(j, i)) symmetric = false;
    }
    if (!any) {
      fail(ErrorCode::kDegenerateRow, std::string(to_string(kind)) + " adjacency: vertex " +
                                          std::to_string(i) + " has no neighbours");
    }
  }
  return Adjacency{kind, std::move(entries), symmetric};
}

Correlation pearson(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    fail(ErrorCode::kDimension, "pearson: series lengths differ (" + std::to_string(p.size()) + " vs " +
                                    std::to_string(q.size()) + ")");
  }
  if (p.size() < 2) fail(ErrorCode::kContract, "pearson: need at least two samples");
  const double n = static_cast<double>(p.size());
  const double mp = std::accumulate(p.begin(), p.end(), 0.0) / n;
  const double mq = std::accumulate(q.begin(), q.end(), 0.0) / n;
  double cov = 0.0, vp = 0.0, vq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double dp = p[i] - mp;
    const double dq = q[i] - mq;
    cov += dp * dq;
    vp += dp * dp;
    vq += dq * dq;
  }
  if (vp == 0.0 || vq == 0.0) return {0.0, true};
  return {std::clamp(cov / std::sqrt(vp * vq), -1.0, 1.0), false};
}

Adjacency mode_adjacency(const Tensor& series,
                         const std::optional<std::vector<std::vector<std::size_t>>>& deps) {
  if (series.rank() != 2) fail(ErrorCode::kDimension, "mode_adjacency: series must be N x L");
  const std::size_t n = series.rows();
  const std::size_t len = series.cols();
  if (len < 2) fail(ErrorCode::kContract, "mode_adjacency: series need at least two samples");
  if (!deps) return make_adjacency(AdjacencyKind::kMode, Tensor({n, n}, 1.0));
  if (deps->size() != n) {
    fail(ErrorCode::kDimension, "mode_adjacency: " + std::to_string(deps->size()) +
                                    " dependency sets for " + std::to_string(n) + " modes");
  }
  auto row = [&](std::size_t i) { return series.data().subspan(i * len, len); };
  Tensor entries({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : (*deps)[i]) {
      if (j >= n) fail(ErrorCode::kInvalidArgument, "mode_adjacency: dependency index out of range");
      entries(i, j) = pearson(row(i), row(j)).value;
    }
  }
  return make_adjacency(AdjacencyKind::kMode, std::move(entries));
}

Adjacency time_adjacency(std::size_t window) {
  if (window < 2) {
    fail(ErrorCode::kDegenerateRow, "time adjacency: a window of " + std::to_string(window) +
                                        " timestamp(s) leaves a vertex without neighbours");
  }
  Tensor entries({window, window}, 1.0);
  for (std::size_t i = 0; i < window; ++i) entries(i, i) = 0.0;
  return make_adjacency(AdjacencyKind::kTime, std::move(entries));
}

Adjacency node_adjacency_full(std::size_t nodes) {
  if (nodes == 0) fail(ErrorCode::kContract, "node adjacency: no nodes");
  return make_adjacency(AdjacencyKind::kNode, Tensor({nodes, nodes}, 1.0));
}

std::optional<std::size_t> NodeCoordinates::find(int id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return i;
  return std::nullopt;
}

NodeCoordinates NodeCoordinates::select(std::span<const int> wanted) const {
  NodeCoordinates out;
  for (int id : wanted) {
    auto at = find(id);
    if (!at) fail(ErrorCode::kMissingNode, "no coordinates for node " + std::to_string(id));
    out.ids.push_back(id);
    out.x.push_back(x[*at]);
    out.y.push_back(y[*at]);
  }
  return out;
}

Adjacency node_adjacency_topk(const NodeCoordinates& coords, std::size_t k) {
  const std::size_t m = coords.size();
  if (coords.x.size() != m || coords.y.size() != m) {
    fail(ErrorCode::kDimension, "topk: coordinate columns have different lengths");
  }
  if (k == 0 || k >= m) {
    fail(ErrorCode::kContract, "topk: k must satisfy 1 <= k < " + std::to_string(m) + ", got " +
                                   std::to_string(k));
  }
  std::set<int> unique(coords.ids.begin(), coords.ids.end());
  if (unique.size() != m) fail(ErrorCode::kInvalidArgument, "topk: duplicate node ids");

  Tensor entries({m, m}, 0.0);
  std::vector<std::size_t> order(m);
  std::vector<double> dist(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      dist[j] = std::hypot(coords.x[i] - coords.x[j], coords.y[i] - coords.y[j]);
    }
    order.resize(m);
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return coords.ids[a] < coords.ids[b];
    });
    entries(i, i) = 1.0;
    for (std::size_t n = 0; n < k; ++n) entries(i, order[n]) = 1.0;
  }
  return make_adjacency(AdjacencyKind::kNode, std::move(entries));
}

}  // namespace wsnad
