#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "embver/tensor.hpp"

namespace embver::testing {

// Unique temp directory, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Central-difference gradient of a scalar function over a ParamSet; the
// reference against which hand-written gradients are checked.
ParamSet finite_difference(const std::function<double(const ParamSet&)>& f, const ParamSet& at,
                           double eps = 1e-5);

double max_abs_diff(const ParamSet& a, const ParamSet& b);
// Max of |a-b| / max(|a|, |b|, floor) over all scalars.
double max_rel_diff(const ParamSet& a, const ParamSet& b, double floor = 1e-4);

// O(pos*neg) pairwise ROC-AUC with half credit for ties.
double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Dense alternating least squares on an explicit matrix (zeros included),
// returning user and item factor matrices (rows = entities). Reference
// scorer for planted low-rank graphs.
std::pair<Mat, Mat> als_factorize(const Mat& ratings, int rank, int iters, double reg,
                                  std::uint64_t seed);

}  // namespace embver::testing
