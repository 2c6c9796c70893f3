#include "wsense/golden.hpp"

#include <algorithm>
#include <array>

namespace wsense {

namespace {

using Row = std::array<std::size_t, 8>;

// Rows follow profile(d).windows.
constexpr Row kWisdmCnn = {727942, 1055622, 1383302, 1710982, 2038662, 2366342, 2694022, 3021702};
constexpr Row kWisdmCnnSe = {732038, 1059718, 1387398, 1715078, 2042758, 2370438, 2698118, 3025798};
constexpr Row kWisdmConvLstm = {504678, 635750, 832358, 963430, 1160038, 1291110, 1487718, 1618790};
constexpr Row kWisdmConvLstmSe = {508774, 639846, 836454, 967526, 1164134, 1295206, 1491814, 1622886};

// Thousands of parameters, truncated.
constexpr Row kPamapCnn = {1455, 2110, 2503, 3027, 3355, 3748, 4142, 4535};
constexpr Row kPamapCnnSe = {1459, 2114, 2507, 3032, 3359, 3752, 4146, 4539};
constexpr Row kPamapConvLstm = {835, 1163, 1360, 1622, 1819, 2015, 2212, 2408};
constexpr Row kPamapConvLstmSe = {840, 1167, 1364, 1626, 1823, 2019, 2216, 2412};

}  // namespace

std::optional<GoldenCount> golden_count(Dataset d, Arch arch, std::size_t window) {
  const bool wisdm = d == Dataset::wisdm;
  if (arch == Arch::cnn_wsense) return GoldenCount{wisdm ? 236678u : 242924u, false};
  if (arch == Arch::convlstm_wsense) return GoldenCount{wisdm ? 341094u : 344700u, false};

  const auto& windows = profile(d).windows;
  const auto it = std::find(windows.begin(), windows.end(), window);
  if (it == windows.end()) return std::nullopt;
  const auto col = static_cast<std::size_t>(it - windows.begin());

  const Row* row = nullptr;
  switch (arch) {
    case Arch::cnn: row = wisdm ? &kWisdmCnn : &kPamapCnn; break;
    case Arch::cnn_se: row = wisdm ? &kWisdmCnnSe : &kPamapCnnSe; break;
    case Arch::convlstm: row = wisdm ? &kWisdmConvLstm : &kPamapConvLstm; break;
    case Arch::convlstm_se: row = wisdm ? &kWisdmConvLstmSe : &kPamapConvLstmSe; break;
    default: return std::nullopt;
  }
  return GoldenCount{(*row)[col], !wisdm};
}

bool golden_matches(const GoldenCount& golden, std::size_t total) {
  return golden.thousands ? total / 1000 == golden.value : total == golden.value;
}

}  // namespace wsense
