#pragma once

// Reference computations the tests compare the library against. Nothing here
// calls into the code under test.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Amari index of P = W A, normalised to [0, 1]; 0 means W undoes A up to
/// permutation and scaling.
inline double amari_distance(const Eigen::MatrixXd& p_in) {
    const Eigen::MatrixXd p = p_in.cwiseAbs();
    const auto n = static_cast<double>(p.rows());
    double rows = 0.0, cols = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) rows += p.row(i).sum() / p.row(i).maxCoeff() - 1.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) cols += p.col(j).sum() / p.col(j).maxCoeff() - 1.0;
    return (rows + cols) / (2.0 * n * (n - 1.0));
}

/// Population standard deviation in long double, two-pass.
inline long double population_sd(const double* x, std::size_t n) {
    long double mean = 0.0L;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<long double>(n);
    long double ss = 0.0L;
    for (std::size_t i = 0; i < n; ++i) ss += (x[i] - mean) * (x[i] - mean);
    return std::sqrt(ss / static_cast<long double>(n));
}

/// Indices whose SD lies outside mean +/- n_sd * SD over the SD profile.
inline std::vector<long> outside_band(const std::vector<long double>& sds, double n_sd) {
    long double mean = 0.0L;
    for (auto s : sds) mean += s;
    mean /= static_cast<long double>(sds.size());
    long double ss = 0.0L;
    for (auto s : sds) ss += (s - mean) * (s - mean);
    const long double spread = std::sqrt(ss / static_cast<long double>(sds.size()));
    std::vector<long> out;
    for (std::size_t i = 0; i < sds.size(); ++i)
        if (sds[i] > mean + n_sd * spread || sds[i] < mean - n_sd * spread) out.push_back(static_cast<long>(i));
    return out;
}

/// Amplitude of a sinusoid at f in x by least squares on sin/cos.
inline double tone_amplitude(const Eigen::RowVectorXd& x, double fs, double f) {
    double ss = 0, cc = 0, sc = 0, xs = 0, xc = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double ph = 2.0 * std::numbers::pi * f * static_cast<double>(i) / fs;
        const double s = std::sin(ph), c = std::cos(ph);
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += x(i) * s;
        xc += x(i) * c;
    }
    if (f == 0.0) return std::abs(x.mean());
    const double det = ss * cc - sc * sc;
    const double a = (xs * cc - xc * sc) / det;
    const double b = (xc * ss - xs * sc) / det;
    return std::hypot(a, b);
}

/// Legendre polynomials P_0..P_n at x by the three-term recurrence.
inline std::vector<double> legendre(int n, double x) {
    std::vector<double> p(static_cast<std::size_t>(n) + 1);
    p[0] = 1.0;
    if (n >= 1) p[1] = x;
    for (int k = 2; k <= n; ++k) p[static_cast<std::size_t>(k)] = ((2.0 * k - 1.0) * x * p[static_cast<std::size_t>(k) - 1] -
                                                                    (k - 1.0) * p[static_cast<std::size_t>(k) - 2]) / k;
    return p;
}

/// Surface potential of a radial dipole q at radius f * R inside a homogeneous
/// unit-conductivity sphere of radius R:
/// V = q / (4 pi R^2) * sum_{n>=1} (2n + 1) f^(n-1) P_n(cos theta).
inline double radial_dipole_series(double q, double R, double f, double cos_theta, int terms = 400) {
    const auto p = legendre(terms, cos_theta);
    double sum = 0.0;
    double fp = 1.0;
    for (int n = 1; n <= terms; ++n) {
        sum += (2.0 * n + 1.0) * fp * p[static_cast<std::size_t>(n)];
        fp *= f;
    }
    return q / (4.0 * std::numbers::pi * R * R) * sum;
}

/// Principal angles (degrees) between the column spans of two orthonormal bases.
inline std::vector<double> principal_angles_deg(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        out.push_back(std::acos(std::clamp(svd.singularValues()(i), -1.0, 1.0)) * 180.0 / std::numbers::pi);
    return out;
}

inline Eigen::MatrixXd orthonormal(const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

inline double rms(const Eigen::MatrixXd& m) { return std::sqrt(m.squaredNorm() / static_cast<double>(m.size())); }

}  // namespace oracle
