#pragma once

#include <Eigen/Core>
#include <string>
#include <string_view>
#include <vector>

#include "embver/common.hpp"

namespace embver {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct NamedTensor {
    std::string name;
    Mat value;
};

// Ordered collection of named dense matrices. Used for trainable parameters,
// their gradients, and optimizer moment accumulators; the three always share
// one shape layout so they can be iterated in lockstep.
class ParamSet {
public:
    Mat& add(std::string name, Eigen::Index rows, Eigen::Index cols);
    Mat& add(std::string name, Mat value);

    Mat& at(std::string_view name);
    const Mat& at(std::string_view name) const;
    bool has(std::string_view name) const;

    std::size_t size() const { return tensors_.size(); }
    bool empty() const { return tensors_.empty(); }
    const std::vector<NamedTensor>& tensors() const { return tensors_; }
    std::vector<NamedTensor>& tensors() { return tensors_; }

    // Same names and shapes, all entries zero.
    ParamSet zeros_like() const;

    bool same_layout(const ParamSet& other) const;
    bool all_finite() const;
    std::size_t scalar_count() const;

    // Flat views used by the finite-difference harness.
    Vec flatten() const;
    void unflatten(const Vec& flat);

    // Elementwise in-place accumulate; layouts must match.
    void add_scaled(const ParamSet& other, double scale);

    bool operator==(const ParamSet& other) const;

private:
    std::vector<NamedTensor> tensors_;
};

}  // namespace embver
