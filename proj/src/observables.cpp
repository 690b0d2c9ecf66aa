#include "nmqsd/observables.hpp"

#include "nmqsd/csv.hpp"
#include "nmqsd/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace nmqsd {

namespace {

void check_index(const DensityMatrixSeries& s, int i) {
    if (i < 1 || i > s.dim()) {
        throw InvalidParameter("matrix index " + std::to_string(i) + " outside 1.." + std::to_string(s.dim()));
    }
}

Mat as_density(const Mat& a) {
    if (a.rows() != a.cols()) throw InvalidState("density matrix is not square");
    if (hermiticity_defect(a) > 1e-8 * std::max(1.0, a.norm())) throw InvalidState("density matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(a));
    Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-8) throw InvalidState("density matrix has a negative eigenvalue beyond tolerance");
    ev = ev.cwiseMax(0.0);
    const double tr = ev.sum();
    if (tr <= 0.0) throw InvalidState("density matrix has zero trace");
    return es.eigenvectors() * (ev / tr).cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

} // namespace

ObservableSeries coherence(const DensityMatrixSeries& s, int i, int j) {
    check_index(s, i);
    check_index(s, j);
    ObservableSeries o;
    o.name = "|rho_" + std::to_string(i) + std::to_string(j) + "|";
    for (std::size_t t = 0; t < s.rho.size(); ++t) {
        o.values.push_back(std::abs(s.rho[t](i - 1, j - 1)));
        const double a = s.se_re[t](i - 1, j - 1), b = s.se_im[t](i - 1, j - 1);
        o.std_error.push_back(std::sqrt(a * a + b * b));
    }
    return o;
}

ObservableSeries population(const DensityMatrixSeries& s, int i) {
    check_index(s, i);
    ObservableSeries o;
    o.name = "rho_" + std::to_string(i) + std::to_string(i);
    for (std::size_t t = 0; t < s.rho.size(); ++t) {
        o.values.push_back(s.rho[t](i - 1, i - 1).real());
        o.std_error.push_back(s.se_re[t](i - 1, i - 1));
    }
    return o;
}

double fidelity(const Mat& rho, const Mat& sigma) {
    const Mat r = as_density(rho);
    const Mat s = as_density(sigma);
    const Mat sr = psd_sqrt(r);
    const Mat inner = hermitian_part(sr * s * sr);
    Eigen::SelfAdjointEigenSolver<Mat> es(inner);
    double tr = 0.0;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) tr += std::sqrt(std::max(0.0, es.eigenvalues()(k)));
    return std::min(1.0, tr * tr);
}

ObservableSeries fidelity_series(const DensityMatrixSeries& s, const Mat& reference, const std::string& name) {
    ObservableSeries o;
    o.name = name;
    const auto g = s.group_rho.size();
    for (std::size_t t = 0; t < s.rho.size(); ++t) {
        o.values.push_back(fidelity(s.rho[t], reference));
        double err = 0.0;
        if (g >= 2) {
            std::vector<double> v;
            double mean = 0.0;
            for (std::size_t k = 0; k < g; ++k) {
                // group means of a few dozen trajectories can be slightly indefinite
                Eigen::SelfAdjointEigenSolver<Mat> es(s.group_rho[k][t]);
                Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
                const Mat clipped = es.eigenvectors() * (ev / ev.sum()).cast<cplx>().asDiagonal() *
                                    es.eigenvectors().adjoint();
                v.push_back(fidelity(clipped, reference));
                mean += v.back() * s.group_sizes[k];
            }
            mean /= s.n_traj;
            double var = 0.0;
            for (std::size_t k = 0; k < g; ++k) var += s.group_sizes[k] * (v[k] - mean) * (v[k] - mean);
            // batch means: var of the overall mean ~ sum n_k (x_k - x)^2 / ((G-1) N)
            err = std::sqrt(var / ((g - 1.0) * s.n_traj));
        }
        o.std_error.push_back(err);
    }
    return o;
}

Mat werner_state(double f) {
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidParameter("Werner parameter F must lie in [0, 1]");
    Vec w = Vec::Zero(8);
    // |b1 b2 b3> with qubit 1 leftmost: |100> = 4, |010> = 2, |001> = 1
    w(4) = w(2) = w(1) = 1.0 / std::sqrt(3.0);
    return (f / 8.0) * Mat::Identity(8, 8) + (1.0 - f) * w * w.adjoint();
}

double max_trace_distance(const DensityMatrixSeries& a, const DensityMatrixSeries& b, std::vector<double>* per_time) {
    if (a.rho.size() != b.rho.size()) throw InvalidParameter("series have different lengths");
    double worst = 0.0;
    if (per_time) per_time->clear();
    for (std::size_t t = 0; t < a.rho.size(); ++t) {
        const double d = trace_distance(a.rho[t], b.rho[t]);
        worst = std::max(worst, d);
        if (per_time) per_time->push_back(d);
    }
    return worst;
}

void write_observables_csv(std::ostream& os, const TimeGrid& grid, const std::vector<ObservableSeries>& cols,
                           bool with_errors) {
    std::vector<std::string> head{"t"};
    for (const auto& c : cols) {
        head.push_back(c.name);
        if (with_errors) head.push_back(c.name + "_stderr");
    }
    csv::header(os, head);
    for (int t = 0; t < grid.size(); ++t) {
        std::vector<double> row{grid.t(t)};
        for (const auto& c : cols) {
            row.push_back(c.values[t]);
            if (with_errors) row.push_back(c.std_error.empty() ? 0.0 : c.std_error[t]);
        }
        csv::row(os, row);
    }
}

} // namespace nmqsd
