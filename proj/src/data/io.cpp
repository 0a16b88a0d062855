#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coboom/data.hpp"
#include "coboom/error.hpp"

namespace coboom {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::string& data, std::size_t& pos, const std::string& what,
                         const fs::path& path) {
  while (pos < data.size()) {
    if (std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    } else if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
  if (start == pos) throw FormatError(path.string() + ": missing " + what + " in PGM header");
  return data.substr(start, pos - start);
}

std::size_t header_number(const std::string& data, std::size_t& pos, const std::string& what,
                          const fs::path& path) {
  const std::string tok = header_token(data, pos, what, path);
  for (char c : tok) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw FormatError(path.string() + ": bad " + what + " '" + tok + "' in PGM header");
    }
  }
  return static_cast<std::size_t>(std::stoull(tok));
}

}  // namespace

ImageSample load_pgm(const fs::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  const std::string magic = header_token(data, pos, "magic", path);
  if (magic != "P5") {
    throw FormatError(path.string() + ": unsupported magic '" + magic + "', expected binary P5");
  }
  const std::size_t width = header_number(data, pos, "width", path);
  const std::size_t height = header_number(data, pos, "height", path);
  const std::size_t maxval = header_number(data, pos, "maxval", path);
  if (width == 0 || height == 0) throw FormatError(path.string() + ": zero image dimension");
  if (maxval != 255) {
    throw FormatError(path.string() + ": maxval " + std::to_string(maxval) + " unsupported, expected 255");
  }
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) {
    throw FormatError(path.string() + ": truncated PGM header");
  }
  ++pos;
  const std::size_t need = width * height;
  if (data.size() - pos < need) {
    throw FormatError(path.string() + ": truncated payload, expected " + std::to_string(need) +
                      " bytes, found " + std::to_string(data.size() - pos));
  }
  ImageSample img;
  img.id = path.stem().string();
  img.width = width;
  img.height = height;
  img.pixels.resize(need);
  for (std::size_t i = 0; i < need; ++i) {
    img.pixels[i] = static_cast<unsigned char>(data[pos + i]) / 255.0;
  }
  return img;
}

void write_pgm(const ImageSample& img, const fs::path& path) {
  if (img.pixels.size() != img.width * img.height) {
    throw ContractError("write_pgm: pixel count does not match " + std::to_string(img.width) + "x" +
                        std::to_string(img.height));
  }
  std::string bytes = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  bytes.reserve(bytes.size() + img.pixels.size());
  for (double p : img.pixels) {
    const double clamped = std::min(1.0, std::max(0.0, p));
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
  }
  write_file(path, bytes);
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

LabelTable parse_labels_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  LabelTable table;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (!have_header) {
      if (fields.size() < 2 || fields[0] != "id") {
        throw ParseError(where + "header must be 'id,<class>,...'");
      }
      table.class_names.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != table.class_names.size() + 1) {
      throw ParseError(where + "expected " + std::to_string(table.class_names.size() + 1) +
                       " fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw ParseError(where + "missing id");
    std::vector<std::uint8_t> flags;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      if (fields[k] != "0" && fields[k] != "1") {
        throw ParseError(where + "flag '" + fields[k] + "' is not 0 or 1");
      }
      flags.push_back(fields[k] == "1" ? 1 : 0);
    }
    if (!table.rows.emplace(fields[0], std::move(flags)).second) {
      throw ParseError(where + "duplicate id '" + fields[0] + "'");
    }
    table.ids.push_back(fields[0]);
  }
  if (!have_header) throw ParseError(source + ": empty label file");
  return table;
}

LabelTable load_labels_csv(const fs::path& path) {
  return parse_labels_csv(read_file(path), path.string());
}

std::string format_labels_csv(const Dataset& ds) {
  std::string out = "id";
  for (std::size_t c = 0; c < ds.classes; ++c) out += ",c" + std::to_string(c);
  out += '\n';
  for (const auto& s : ds.samples) {
    out += s.id;
    for (auto f : s.labels) out += f ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  nlohmann::json manifest;
  manifest["format"] = "coboom-dataset/1";
  manifest["image_size"] = ds.image_size;
  manifest["classes"] = ds.classes;
  manifest["labels"] = "labels.csv";
  auto& ids = manifest["ids"] = nlohmann::json::array();
  auto& images = manifest["images"] = nlohmann::json::array();
  auto& split = manifest["split"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const std::string rel = "images/" + s.id + ".pgm";
    write_pgm(s, dir / rel);
    ids.push_back(s.id);
    images.push_back(rel);
    split.push_back(ds.split[i] == Split::train ? "train" : "test");
  }
  write_file(dir / "labels.csv", format_labels_csv(ds));
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  try {
    const auto& ids = m.at("ids");
    const auto& images = m.at("images");
    const auto& split = m.at("split");
    if (ids.size() != images.size() || ids.size() != split.size()) {
      throw ParseError(manifest_path.string() + ": ids, images and split differ in length");
    }
    const LabelTable labels = load_labels_csv(base / m.at("labels").get<std::string>());
    ds.classes = labels.class_names.size();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ImageSample s = load_pgm(base / images[i].get<std::string>());
      s.id = ids[i].get<std::string>();
      const auto row = labels.rows.find(s.id);
      if (row == labels.rows.end()) {
        throw ParseError(manifest_path.string() + ": no labels for id '" + s.id + "'");
      }
      s.labels = row->second;
      if (s.width != s.height) throw FormatError(s.id + ": images must be square");
      if (ds.image_size == 0) ds.image_size = s.width;
      if (s.width != ds.image_size) throw FormatError(s.id + ": inconsistent image size");
      const std::string sp = split[i].get<std::string>();
      if (sp != "train" && sp != "test") {
        throw ParseError(manifest_path.string() + ": unknown split '" + sp + "'");
      }
      ds.split.push_back(sp == "train" ? Split::train : Split::test);
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace coboom
