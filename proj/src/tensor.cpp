#include "embver/tensor.hpp"

#include <algorithm>

namespace embver {

Mat& ParamSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    return add(std::move(name), Mat::Zero(rows, cols));
}

Mat& ParamSet::add(std::string name, Mat value) {
    if (has(name)) throw ValidationError("ParamSet: duplicate tensor name '" + name + "'");
    tensors_.push_back(NamedTensor{std::move(name), std::move(value)});
    return tensors_.back().value;
}

Mat& ParamSet::at(std::string_view name) {
    for (auto& t : tensors_) {
        if (t.name == name) return t.value;
    }
    throw LookupError("ParamSet: no tensor named '" + std::string(name) + "'");
}

const Mat& ParamSet::at(std::string_view name) const {
    return const_cast<ParamSet*>(this)->at(name);
}

bool ParamSet::has(std::string_view name) const {
    return std::any_of(tensors_.begin(), tensors_.end(),
                       [&](const NamedTensor& t) { return t.name == name; });
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& t : tensors_) out.add(t.name, Mat::Zero(t.value.rows(), t.value.cols()));
    return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name != other.tensors_[i].name) return false;
        if (tensors_[i].value.rows() != other.tensors_[i].value.rows()) return false;
        if (tensors_[i].value.cols() != other.tensors_[i].value.cols()) return false;
    }
    return true;
}

bool ParamSet::all_finite() const {
    return std::all_of(tensors_.begin(), tensors_.end(),
                       [](const NamedTensor& t) { return t.value.allFinite(); });
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
}

Vec ParamSet::flatten() const {
    Vec flat(static_cast<Eigen::Index>(scalar_count()));
    Eigen::Index pos = 0;
    for (const auto& t : tensors_) {
        flat.segment(pos, t.value.size()) = Eigen::Map<const Vec>(t.value.data(), t.value.size());
        pos += t.value.size();
    }
    return flat;
}

void ParamSet::unflatten(const Vec& flat) {
    if (flat.size() != static_cast<Eigen::Index>(scalar_count()))
        throw ShapeError("ParamSet::unflatten: size mismatch");
    Eigen::Index pos = 0;
    for (auto& t : tensors_) {
        Eigen::Map<Vec>(t.value.data(), t.value.size()) = flat.segment(pos, t.value.size());
        pos += t.value.size();
    }
}

void ParamSet::add_scaled(const ParamSet& other, double scale) {
    if (!same_layout(other)) throw ShapeError("ParamSet::add_scaled: layout mismatch");
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        tensors_[i].value += scale * other.tensors_[i].value;
}

bool ParamSet::operator==(const ParamSet& other) const {
    if (!same_layout(other)) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        if (tensors_[i].value != other.tensors_[i].value) return false;
    return true;
}

}  // namespace embver
