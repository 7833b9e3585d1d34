#include "goalplan/io.hpp"

#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace goalplan {
namespace io {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) throw IoError("cannot open for writing: " + path);
        for (const auto& line : lines) {
            if (gzwrite(f, line.data(), static_cast<unsigned>(line.size())) !=
                    static_cast<int>(line.size()) ||
                gzwrite(f, "\n", 1) != 1) {
                gzclose(f);
                throw IoError("gzip write failed: " + path);
            }
        }
        if (gzclose(f) != Z_OK) throw IoError("gzip close failed: " + path);
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    for (const auto& line : lines) os << line << '\n';
    if (!os) throw IoError("write failed: " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
    std::vector<std::string> lines;
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw IoError("cannot open: " + path);
        std::string current;
        char buf[1 << 16];
        int n;
        while ((n = gzread(f, buf, sizeof(buf))) > 0) {
            for (int i = 0; i < n; ++i) {
                if (buf[i] == '\n') {
                    lines.push_back(std::move(current));
                    current.clear();
                } else {
                    current.push_back(buf[i]);
                }
            }
        }
        bool error = n < 0;
        gzclose(f);
        if (error) throw IoError("gzip read failed: " + path);
        if (!current.empty()) lines.push_back(std::move(current));
        return lines;
    }
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << text;
    if (!os) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace io
}  // namespace goalplan
