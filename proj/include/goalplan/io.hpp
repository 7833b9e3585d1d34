#pragma once

#include <string>
#include <vector>

#include "goalplan/common.hpp"

namespace goalplan {
namespace io {

bool ends_with(const std::string& s, const std::string& suffix);

// Line helpers; a ".gz" path transparently gzips.
void write_lines(const std::string& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::string& path);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

bool file_exists(const std::string& path);

}  // namespace io
}  // namespace goalplan
