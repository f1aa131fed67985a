#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "causalreg/synthdata.hpp"

namespace causalreg {

// CSV layout: header `env,y,<attr names...>,x0,x1,...`, attribute columns in
// sorted name order, one row per sample, reals printed with 17 significant
// digits so values round-trip exactly.

void write_csv(std::ostream& out, const TabularDataset& ds);
void export_csv(const TabularDataset& ds, const std::filesystem::path& path);

/// n_classes defaults to max(y) + 1. Environments appear in first-seen order.
[[nodiscard]] TabularDataset read_csv(std::istream& in, std::optional<int> n_classes = std::nullopt);
[[nodiscard]] TabularDataset import_csv(const std::filesystem::path& path, std::optional<int> n_classes = std::nullopt);

}  // namespace causalreg
