#include "chardec/rate_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "chardec/error.hpp"
#include "chardec/stats.hpp"

namespace chardec {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<const RowMat>;

// Contiguous CV blocks: fold f holds rows [bounds[f], bounds[f+1]).
std::vector<int> fold_bounds(int rows, int folds) {
  std::vector<int> b(static_cast<std::size_t>(folds) + 1, 0);
  for (int f = 0; f <= folds; ++f) {
    b[static_cast<std::size_t>(f)] = static_cast<int>(
        static_cast<std::int64_t>(rows) * f / folds);
  }
  return b;
}

}  // namespace

DesignMatrix assemble_design(const VolumeSeries& volumes, int delays,
                             const std::vector<std::int64_t>* mask) {
  volumes.validate();
  if (delays < 1) throw ConfigError("assemble_design: delays must be positive");
  if (volumes.t <= delays) {
    throw DataError("assemble_design: need more than " + std::to_string(delays) +
                    " acquisitions, got " + std::to_string(volumes.t));
  }
  const std::int64_t vox = volumes.voxels();
  if (mask != nullptr) {
    if (mask->empty()) throw DataError("assemble_design: empty voxel mask");
    for (std::int64_t idx : *mask) {
      if (idx < 0 || idx >= vox) {
        throw DataError("assemble_design: mask voxel " + std::to_string(idx) + " out of range");
      }
    }
  }
  const std::int64_t width = mask != nullptr ? static_cast<std::int64_t>(mask->size()) : vox;
  DesignMatrix d;
  d.rows = volumes.t - delays;
  d.cols = static_cast<int>(width * delays);
  d.data.resize(static_cast<std::size_t>(d.rows) * static_cast<std::size_t>(d.cols));
  for (int t = 0; t < d.rows; ++t) {
    double* row = d.data.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(d.cols);
    for (int k = 1; k <= delays; ++k) {
      const double* v = volumes.volume(t + k);
      double* dst = row + static_cast<std::int64_t>(k - 1) * width;
      if (mask != nullptr) {
        for (std::size_t j = 0; j < mask->size(); ++j) dst[j] = v[(*mask)[j]];
      } else {
        std::copy(v, v + vox, dst);
      }
    }
  }
  for (int t = d.rows; t < volumes.t; ++t) d.dropped.push_back(t);
  return d;
}

RateModel ridge_fit(const DesignMatrix& design, const std::vector<double>& rates,
                    const RidgeConfig& cfg) {
  const int rows = design.rows, cols = design.cols;
  if (static_cast<int>(rates.size()) != rows) {
    throw ShapeError("ridge_fit: rate count does not match design rows");
  }
  if (cfg.lambda_grid.empty()) throw ConfigError("ridge_fit: empty lambda grid");
  for (double l : cfg.lambda_grid) {
    if (l <= 0.0) throw ConfigError("ridge_fit: lambda must be positive");
  }
  if (rows < 2) throw DataError("ridge_fit: need at least two rows");

  MapMat X(design.data.data(), rows, cols);
  Eigen::Map<const Eigen::VectorXd> y(rates.data(), rows);

  // One uncentered Gram serves every fold; per-fold centering reduces to
  // rank-one corrections with q_i = x_i . mu.
  Eigen::MatrixXd G = X * X.transpose();

  double best_r = -2.0;
  double best_lambda = cfg.lambda_grid.front();
  const int folds = std::max(2, std::min(cfg.cv_folds, rows / 2));

  if (rows >= 2 * folds) {
    const std::vector<int> bounds = fold_bounds(rows, folds);
    for (double lambda : cfg.lambda_grid) {
      Eigen::VectorXd pooled_pred(rows);
      for (int f = 0; f < folds; ++f) {
        const int lo = bounds[static_cast<std::size_t>(f)];
        const int hi = bounds[static_cast<std::size_t>(f) + 1];
        const int n_train = rows - (hi - lo);

        std::vector<int> train;
        train.reserve(static_cast<std::size_t>(n_train));
        for (int i = 0; i < rows; ++i) {
          if (i < lo || i >= hi) train.push_back(i);
        }

        Eigen::VectorXd mu = Eigen::VectorXd::Zero(cols);
        double y_mean = 0.0;
        for (int i : train) {
          mu += X.row(i).transpose();
          y_mean += y(i);
        }
        mu /= n_train;
        y_mean /= n_train;
        Eigen::VectorXd q = X * mu;
        const double c = mu.squaredNorm();

        Eigen::MatrixXd Gc(n_train, n_train);
        Eigen::VectorXd yc(n_train);
        for (int a = 0; a < n_train; ++a) {
          const int ia = train[static_cast<std::size_t>(a)];
          yc(a) = y(ia) - y_mean;
          for (int b = 0; b < n_train; ++b) {
            const int ib = train[static_cast<std::size_t>(b)];
            Gc(a, b) = G(ia, ib) - q(ia) - q(ib) + c;
          }
        }
        Gc.diagonal().array() += lambda;
        Eigen::VectorXd alpha = Gc.ldlt().solve(yc);

        for (int j = lo; j < hi; ++j) {
          double pred = y_mean;
          for (int a = 0; a < n_train; ++a) {
            const int ia = train[static_cast<std::size_t>(a)];
            pred += alpha(a) * (G(j, ia) - q(j) - q(ia) + c);
          }
          pooled_pred(j) = pred;
        }
      }
      std::vector<double> pv(pooled_pred.data(), pooled_pred.data() + rows);
      const double r = pearson(pv, rates);
      if (r > best_r) {
        best_r = r;
        best_lambda = lambda;
      }
    }
  } else {
    best_r = 0.0;  // too little data to cross-validate; smallest lambda wins
  }

  // final fit on everything at the winning lambda
  Eigen::VectorXd mu = X.colwise().mean().transpose();
  const double y_mean = y.mean();
  Eigen::VectorXd yc = y.array() - y_mean;

  RateModel model;
  model.lambda = best_lambda;
  model.cv_r = best_r;
  model.weights.resize(static_cast<std::size_t>(cols));
  Eigen::Map<Eigen::VectorXd> w(model.weights.data(), cols);

  if (cols <= rows) {
    RowMat Xc = X.rowwise() - mu.transpose();
    Eigen::MatrixXd A = Xc.transpose() * Xc;
    A.diagonal().array() += best_lambda;
    w = A.ldlt().solve(Xc.transpose() * yc);
  } else {
    Eigen::VectorXd q = X * mu;
    const double c = mu.squaredNorm();
    Eigen::MatrixXd Gc = G;
    for (int a = 0; a < rows; ++a) {
      for (int b = 0; b < rows; ++b) Gc(a, b) -= q(a) + q(b) - c;
    }
    Gc.diagonal().array() += best_lambda;
    Eigen::VectorXd alpha = Gc.ldlt().solve(yc);
    w = X.transpose() * alpha - mu * alpha.sum();
  }
  model.intercept = y_mean - mu.dot(w);
  return model;
}

std::vector<int> predict_counts(const VolumeSeries& volumes, const RateModel& model) {
  volumes.validate();
  const std::int64_t vox = volumes.voxels();
  const std::int64_t width =
      model.voxel_mask.empty() ? vox : static_cast<std::int64_t>(model.voxel_mask.size());
  if (static_cast<std::int64_t>(model.weights.size()) != width * model.delays) {
    throw ShapeError("predict_counts: weight length does not match voxels x delays");
  }
  for (std::int64_t idx : model.voxel_mask) {
    if (idx < 0 || idx >= vox) {
      throw DataError("predict_counts: mask voxel " + std::to_string(idx) + " out of range");
    }
  }
  std::vector<int> counts(static_cast<std::size_t>(volumes.t), 0);
  for (int t = 0; t + model.delays < volumes.t; ++t) {
    double pred = model.intercept;
    for (int k = 1; k <= model.delays; ++k) {
      const double* v = volumes.volume(t + k);
      const double* w = model.weights.data() + static_cast<std::int64_t>(k - 1) * width;
      if (model.voxel_mask.empty()) {
        for (std::int64_t i = 0; i < vox; ++i) pred += w[i] * v[i];
      } else {
        for (std::int64_t i = 0; i < width; ++i) {
          pred += w[i] * v[model.voxel_mask[static_cast<std::size_t>(i)]];
        }
      }
    }
    if (pred < 0.0) pred = 0.0;
    counts[static_cast<std::size_t>(t)] = static_cast<int>(std::floor(pred + 0.5));
  }
  return counts;
}

std::vector<int> true_counts(const Transcript& transcript, const AcquisitionGrid& grid) {
  std::vector<int> counts(static_cast<std::size_t>(grid.count), 0);
  for (const TranscriptEntry& e : transcript.entries) {
    const double m = e.midpoint();
    const int t = static_cast<int>(std::floor(m / grid.tr_s));
    if (t >= 0 && t < grid.count) counts[static_cast<std::size_t>(t)] += 1;
  }
  return counts;
}

std::vector<double> place_onsets(const std::vector<int>& counts, const AcquisitionGrid& grid) {
  std::vector<double> onsets;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    const int n = counts[t];
    if (n < 0) throw DataError("place_onsets: negative count");
    const double start = grid.tr_s * static_cast<double>(t);
    for (int j = 0; j < n; ++j) {
      onsets.push_back(start + (j + 0.5) * grid.tr_s / n);
    }
  }
  return onsets;
}

}  // namespace chardec
