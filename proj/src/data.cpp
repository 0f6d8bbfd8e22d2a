#include "milatp/data.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace milatp {

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trimmed(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("manifest: cannot open " + path);
  const fs::path base = fs::path(path).parent_path();

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("manifest: " + path + " is empty");
  auto header = split_csv_row(line);
  for (auto& h : header) h = trimmed(h);
  const bool has_group =
      header.size() == 3 && header[2] == "group_id";
  if (!(header.size() == 2 || has_group) || header[0] != "image_path" ||
      header[1] != "atp")
    throw std::runtime_error(
        "manifest: " + path +
        ": expected header image_path,atp[,group_id], got \"" + line + "\"");

  DatasetManifest m;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trimmed(line).empty()) continue;
    const auto fields = split_csv_row(line);
    if (fields.size() != header.size())
      throw std::runtime_error("manifest: " + path + " row " +
                               std::to_string(row) + ": expected " +
                               std::to_string(header.size()) +
                               " fields, got " +
                               std::to_string(fields.size()));
    WellSample s;
    s.image_path = trimmed(fields[0]);
    if (s.image_path.empty())
      throw std::runtime_error("manifest: " + path + " row " +
                               std::to_string(row) + ": empty image_path");
    try {
      size_t used = 0;
      s.atp = std::stod(trimmed(fields[1]), &used);
      if (used != trimmed(fields[1]).size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::runtime_error("manifest: " + path + " row " +
                               std::to_string(row) + ": atp \"" + fields[1] +
                               "\" is not a number");
    }
    if (s.atp < 0.0)
      throw std::runtime_error("manifest: " + path + " row " +
                               std::to_string(row) + ": negative atp " +
                               trimmed(fields[1]));
    if (has_group) s.group_id = trimmed(fields[2]);

    fs::path p(s.image_path);
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p))
      throw std::runtime_error("manifest: " + path + " row " +
                               std::to_string(row) + ": image file " +
                               p.string() + " does not exist");
    s.image_path = p.string();
    m.samples.push_back(std::move(s));
    m.atp_max = std::max(m.atp_max, m.samples.back().atp);
  }
  if (m.samples.empty())
    throw std::runtime_error("manifest: " + path + " contains no samples");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("manifest: cannot write " + path);
  const bool groups = m.has_groups();
  out << (groups ? "image_path,atp,group_id\n" : "image_path,atp\n");
  out.precision(17);
  for (const auto& s : m.samples) {
    out << s.image_path << ',' << s.atp;
    if (groups) out << ',' << s.group_id;
    out << '\n';
  }
  if (!out)
    throw std::runtime_error("manifest: write failed for " + path);
}

}  // namespace milatp
