#pragma once

// Values computed with Python's math.erf in f64.

namespace oracle {

inline constexpr double kGeluAtOne = 0.8413447460685429;       // 1 * Phi(1)
inline constexpr double kGeluAtMinusHalf = -0.15426876936299344;  // -0.5 * Phi(-0.5)

}  // namespace oracle
