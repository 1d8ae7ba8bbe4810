#pragma once

#include <cmath>
#include <compare>
#include <cstdint>

namespace cdnpower {

// Energy held as a whole number of millijoules.
//
// Every slot term is rounded once to the nearest millijoule and all sums are
// integer, so any two code paths that add the same terms (in any order) end
// up with bit-identical totals. The solvers rely on this for exact agreement
// with the brute-force oracle.
class Energy {
 public:
  constexpr Energy() = default;

  static constexpr Energy from_millijoules(std::int64_t mj) { return Energy(mj); }
  static Energy from_joules(double joules) {
    return Energy(std::llround(joules * 1000.0));
  }

  constexpr std::int64_t millijoules() const { return mj_; }
  constexpr double joules() const { return static_cast<double>(mj_) / 1000.0; }
  constexpr double kwh() const { return joules() / 3.6e6; }

  constexpr Energy& operator+=(Energy other) {
    mj_ += other.mj_;
    return *this;
  }
  constexpr Energy& operator-=(Energy other) {
    mj_ -= other.mj_;
    return *this;
  }
  friend constexpr Energy operator+(Energy a, Energy b) { return a += b; }
  friend constexpr Energy operator-(Energy a, Energy b) { return a -= b; }
  friend constexpr Energy operator*(Energy a, std::int64_t k) { return Energy(a.mj_ * k); }
  friend constexpr Energy operator*(std::int64_t k, Energy a) { return a * k; }

  friend constexpr auto operator<=>(Energy, Energy) = default;

 private:
  constexpr explicit Energy(std::int64_t mj) : mj_(mj) {}

  std::int64_t mj_ = 0;
};

}  // namespace cdnpower
