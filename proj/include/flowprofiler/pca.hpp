#pragma once

// 2D PCA projection for the cluster plots. Fitted on baseline data only so
// the axes stay put while the stream arrives.

#include <array>
#include <span>

#include <Eigen/Dense>

#include "flowprofiler/errors.hpp"
#include "flowprofiler/types.hpp"

namespace flowprofiler {

class Pca2D {
public:
    static Pca2D fit(std::span<const Point> points) {
        if (points.size() < 2) throw InsufficientData("pca needs at least 2 points");
        const size_t n = points.size();
        const size_t d = points[0].size();
        if (d < 2) throw InsufficientData("pca needs at least 2 dimensions");

        Eigen::MatrixXd x(n, d);
        for (size_t i = 0; i < n; ++i) {
            if (points[i].size() != d) throw DimensionMismatch("inconsistent point dimensions");
            for (size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
        }
        Eigen::RowVectorXd mean = x.colwise().mean();
        x.rowwise() -= mean;
        Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        if (solver.info() != Eigen::Success) throw Error("pca eigendecomposition failed");

        Pca2D pca;
        pca.mean_.assign(mean.data(), mean.data() + d);
        // Eigenvalues come back ascending; take the last two columns.
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
            // Deterministic sign: the largest-magnitude component is positive.
            Eigen::Index arg = 0;
            v.cwiseAbs().maxCoeff(&arg);
            if (v(arg) < 0) v = -v;
            pca.comp_[c].assign(v.data(), v.data() + d);
        }
        return pca;
    }

    std::array<double, 2> project(const Point& p) const {
        if (p.size() != mean_.size()) throw DimensionMismatch("point dimension differs from fit");
        std::array<double, 2> out{0.0, 0.0};
        for (int c = 0; c < 2; ++c) {
            double s = 0;
            for (size_t j = 0; j < p.size(); ++j) s += (p[j] - mean_[j]) * comp_[c][j];
            out[c] = s;
        }
        return out;
    }

private:
    std::vector<double> mean_;
    std::array<std::vector<double>, 2> comp_;
};

} // namespace flowprofiler
