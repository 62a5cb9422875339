#ifndef MEMGAME_MATRIX_HPP
#define MEMGAME_MATRIX_HPP

#include <cstddef>
#include <vector>

namespace memgame {

// Dense path-major array: row p holds the whole trajectory of path p,
// so per-path loops run on contiguous memory.
class PathMatrix {
  public:
    PathMatrix() = default;
    PathMatrix(std::size_t n_paths, std::size_t n_cols, double fill = 0.0)
        : n_paths_(n_paths), n_cols_(n_cols), data_(n_paths * n_cols, fill) {}

    double& operator()(std::size_t path, std::size_t col) {
        return data_[path * n_cols_ + col];
    }
    double operator()(std::size_t path, std::size_t col) const {
        return data_[path * n_cols_ + col];
    }

    double* row(std::size_t path) { return data_.data() + path * n_cols_; }
    const double* row(std::size_t path) const { return data_.data() + path * n_cols_; }

    std::size_t n_paths() const { return n_paths_; }
    std::size_t n_cols() const { return n_cols_; }
    bool empty() const { return data_.empty(); }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

  private:
    std::size_t n_paths_ = 0;
    std::size_t n_cols_ = 0;
    std::vector<double> data_;
};

} // namespace memgame

#endif
