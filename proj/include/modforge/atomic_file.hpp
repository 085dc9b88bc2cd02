#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string_view>

namespace modforge {

// Runs `fill` against a sibling temporary file, then renames it over `path`.
// Readers never observe a partially written file. Throws DataError on failure.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& fill);

void write_text_atomically(const std::filesystem::path& path, std::string_view text);

}  // namespace modforge
