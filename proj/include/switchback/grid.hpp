#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace switchback {

// Dense row-major grid. Rows are units, columns are timesteps.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows),
        cols_(cols),
        data_(static_cast<std::size_t>(rows > 0 ? rows : 0) *
                  static_cast<std::size_t>(cols > 0 ? cols : 0),
              fill) {
    if (rows <= 0 || cols <= 0) {
      throw std::invalid_argument("grid dimensions must be positive (got " +
                                  std::to_string(rows) + "x" + std::to_string(cols) + ")");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  T& operator()(int r, int c) { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const { return data_[index(r, c)]; }

  std::span<T> row(int r) { return {data_.data() + index(r, 0), static_cast<std::size_t>(cols_)}; }
  std::span<const T> row(int r) const {
    return {data_.data() + index(r, 0), static_cast<std::size_t>(cols_)};
  }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

// Real-valued outcome panel (observed or synthesized). Row labels are optional;
// writers fall back to 1-based unit indices.
struct OutcomeMatrix {
  Grid<double> values;
  std::vector<std::string> unit_ids;

  int n_units() const { return values.rows(); }
  int n_steps() const { return values.cols(); }
};

}  // namespace switchback
