#include "test_support.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "embver/common.hpp"

namespace embver::testing {

TempDir::TempDir() {
    std::random_device rd;
    for (int attempt = 0; attempt < 16; ++attempt) {
        auto candidate = std::filesystem::temp_directory_path() /
                         ("embver_test_" + std::to_string(rd()));
        std::error_code ec;
        if (std::filesystem::create_directory(candidate, ec)) {
            path_ = candidate;
            return;
        }
    }
    throw std::runtime_error("could not create temp directory");
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

ParamSet finite_difference(const std::function<double(const ParamSet&)>& f, const ParamSet& at,
                           double eps) {
    Vec flat = at.flatten();
    Vec grad(flat.size());
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        Vec plus = flat, minus = flat;
        plus[i] += eps;
        minus[i] -= eps;
        ParamSet p_plus = at, p_minus = at;
        p_plus.unflatten(plus);
        p_minus.unflatten(minus);
        grad[i] = (f(p_plus) - f(p_minus)) / (2.0 * eps);
    }
    ParamSet out = at;
    out.unflatten(grad);
    return out;
}

double max_abs_diff(const ParamSet& a, const ParamSet& b) {
    Vec fa = a.flatten(), fb = b.flatten();
    if (fa.size() != fb.size()) throw std::invalid_argument("layout mismatch");
    return (fa - fb).cwiseAbs().maxCoeff();
}

double max_rel_diff(const ParamSet& a, const ParamSet& b, double floor) {
    Vec fa = a.flatten(), fb = b.flatten();
    if (fa.size() != fb.size()) throw std::invalid_argument("layout mismatch");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < fa.size(); ++i) {
        double scale = std::max({std::abs(fa[i]), std::abs(fb[i]), floor});
        worst = std::max(worst, std::abs(fa[i] - fb[i]) / scale);
    }
    return worst;
}

double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("size mismatch");
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t p = 0; p < scores.size(); ++p) {
        if (labels[p] != 1) continue;
        for (std::size_t n = 0; n < scores.size(); ++n) {
            if (labels[n] != 0) continue;
            ++pairs;
            if (scores[p] > scores[n])
                wins += 1.0;
            else if (scores[p] == scores[n])
                wins += 0.5;
        }
    }
    if (pairs == 0) throw std::invalid_argument("need both classes");
    return wins / static_cast<double>(pairs);
}

std::pair<Mat, Mat> als_factorize(const Mat& ratings, int rank, int iters, double reg,
                                  std::uint64_t seed) {
    Rng rng(seed);
    Mat user(ratings.rows(), rank), item(ratings.cols(), rank);
    for (Eigen::Index i = 0; i < user.rows(); ++i)
        for (int j = 0; j < rank; ++j) user(i, j) = 0.1 * rng.normal();
    for (Eigen::Index i = 0; i < item.rows(); ++i)
        for (int j = 0; j < rank; ++j) item(i, j) = 0.1 * rng.normal();
    Mat eye = Mat::Identity(rank, rank);
    for (int it = 0; it < iters; ++it) {
        Mat gram_i = item.transpose() * item + reg * eye;
        user = (gram_i.ldlt().solve(item.transpose() * ratings.transpose())).transpose();
        Mat gram_u = user.transpose() * user + reg * eye;
        item = (gram_u.ldlt().solve(user.transpose() * ratings)).transpose();
    }
    return {user, item};
}

}  // namespace embver::testing
