#include "wsense/profile.hpp"

namespace wsense {

namespace {

constexpr DatasetProfile kWisdm{
    Dataset::wisdm, "wisdm", 3, 6, 20.0, 0.50, 16, {80, 120, 160, 200, 240, 280, 320, 360}};
constexpr DatasetProfile kPamap2{
    Dataset::pamap2, "pamap2", 36, 12, 100.0, 0.78, 32, {171, 250, 300, 360, 400, 450, 500, 550}};

}  // namespace

const DatasetProfile& profile(Dataset d) { return d == Dataset::wisdm ? kWisdm : kPamap2; }

std::optional<Dataset> parse_dataset(std::string_view name) {
  if (name == "wisdm") return Dataset::wisdm;
  if (name == "pamap2" || name == "pamap") return Dataset::pamap2;
  return std::nullopt;
}

}  // namespace wsense
