#include "slsdrop/bank_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "slsdrop/errors.hpp"

namespace slsdrop {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'L', 'S', 'D', 'B', 'A', 'N', 'K'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr int kTextVersion = 1;

std::vector<double> to_flat(const Matrix& m) {
  std::vector<double> flat(static_cast<std::size_t>(m.size()));
  std::size_t at = 0;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) flat[at++] = m(r, c);
  }
  return flat;
}

Matrix from_flat(const std::vector<double>& flat, Index rows, Index cols,
                 const char* what) {
  if (static_cast<Index>(flat.size()) != rows * cols) {
    throw IoError(std::string("bank: ") + what + " has the wrong size");
  }
  Matrix m(rows, cols);
  std::size_t at = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = flat[at++];
  }
  return m;
}

json column_to_json(const ColumnResponse& col) {
  json j;
  j["owner"] = col.owner;
  j["horizon"] = col.horizon;
  j["support"] = col.support;
  json xs = json::array(), us = json::array();
  for (const auto& block : col.phi_x) xs.push_back(to_flat(block));
  for (const auto& block : col.phi_u) us.push_back(to_flat(block));
  j["phi_x"] = std::move(xs);
  j["phi_u"] = std::move(us);
  return j;
}

ColumnResponse column_from_json(const json& j, Index n, Index p, Index width) {
  ColumnResponse col;
  col.owner = j.at("owner").get<int>();
  col.horizon = j.at("horizon").get<int>();
  col.support = j.at("support").get<std::vector<int>>();
  for (const auto& block : j.at("phi_x")) {
    col.phi_x.push_back(
        from_flat(block.get<std::vector<double>>(), n, width, "state block"));
  }
  for (const auto& block : j.at("phi_u")) {
    col.phi_u.push_back(
        from_flat(block.get<std::vector<double>>(), p, width, "input block"));
  }
  return col;
}

// ---- binary primitives ----------------------------------------------------

void put_i64(std::ostream& out, std::int64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) {
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >>
                                         (8 * i)) &
                                        0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf), 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) {
    buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf), 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_i64(out, static_cast<std::int64_t>(bits));
}

std::int64_t get_i64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw IoError("bank: truncated binary file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return static_cast<std::int64_t>(v);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw IoError("bank: truncated binary file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  }
  return v;
}

double get_f64(std::istream& in) {
  const std::uint64_t bits = static_cast<std::uint64_t>(get_i64(in));
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
  }
}

Matrix get_matrix(std::istream& in, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = get_f64(in);
  }
  return m;
}

void put_column(std::ostream& out, const ColumnResponse& col) {
  put_i64(out, col.owner);
  put_i64(out, col.horizon);
  put_i64(out, static_cast<std::int64_t>(col.support.size()));
  for (int s : col.support) put_i64(out, s);
  for (const auto& block : col.phi_x) put_matrix(out, block);
  for (const auto& block : col.phi_u) put_matrix(out, block);
}

ColumnResponse get_column(std::istream& in, int horizon, Index n, Index p,
                          Index width) {
  ColumnResponse col;
  col.owner = static_cast<int>(get_i64(in));
  col.horizon = static_cast<int>(get_i64(in));
  const auto support_len = get_i64(in);
  if (support_len < 0 || support_len > (std::int64_t{1} << 20)) {
    throw IoError("bank: implausible support length");
  }
  col.support.resize(static_cast<std::size_t>(support_len));
  for (auto& s : col.support) s = static_cast<int>(get_i64(in));
  for (int k = 0; k < horizon; ++k) {
    col.phi_x.push_back(get_matrix(in, n, width));
  }
  for (int k = 0; k < horizon; ++k) {
    col.phi_u.push_back(get_matrix(in, p, width));
  }
  return col;
}

std::vector<Index> partition_sizes(const BlockPartition& part) {
  std::vector<Index> sizes;
  for (Index i = 0; i < part.count(); ++i) sizes.push_back(part.size(i));
  return sizes;
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON format
// ---------------------------------------------------------------------------

void save_bank_text(const ControllerBank& bank, const std::string& path) {
  bank.validate();
  json j;
  j["format"] = "slsdrop-bank";
  j["version"] = kTextVersion;
  j["mode"] = bank.mode == ControllerMode::kOffline ? "offline" : "online";
  j["horizon"] = bank.horizon;
  j["lambda"] = bank.lambda;
  j["state_blocks"] = partition_sizes(bank.state_blocks);
  j["input_blocks"] = partition_sizes(bank.input_blocks);

  json dist = json::array();
  for (int i = 0; i < bank.subsystem_count(); ++i) {
    json entries = json::array();
    for (const auto& entry : bank.distribution.support_of(i)) {
      entries.push_back({{"receivers", entry.receivers},
                         {"probability", entry.probability}});
    }
    dist.push_back(std::move(entries));
  }
  j["distribution"] = std::move(dist);

  j["certification"] = {{"certified", bank.certification.certified},
                        {"worst_residual", bank.certification.worst_residual},
                        {"worst_subsystem", bank.certification.worst_subsystem},
                        {"worst_pattern", bank.certification.worst_pattern},
                        {"margin", bank.certification.margin}};

  if (bank.mode == ControllerMode::kOffline) {
    json cols = json::array();
    for (const auto& col : bank.offline_columns) {
      cols.push_back(column_to_json(col));
    }
    j["columns"] = std::move(cols);
  } else {
    json all = json::array();
    for (const auto& per_pattern : bank.online_columns) {
      json cols = json::array();
      for (const auto& col : per_pattern) cols.push_back(column_to_json(col));
      all.push_back(std::move(cols));
    }
    j["columns"] = std::move(all);
  }

  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(1, '\t') << '\n';
  if (!out) throw IoError("failed while writing " + path);
}

ControllerBank load_bank_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("failed to parse " + path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "slsdrop-bank") {
      throw IoError(path + " is not a controller bank file");
    }
    if (j.at("version").get<int>() != kTextVersion) {
      throw IoError(path + " uses an unsupported bank version");
    }
    ControllerBank bank;
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "offline") {
      bank.mode = ControllerMode::kOffline;
    } else if (mode == "online") {
      bank.mode = ControllerMode::kOnline;
    } else {
      throw IoError(path + " names an unknown controller mode");
    }
    bank.horizon = j.at("horizon").get<int>();
    bank.lambda = j.at("lambda").get<double>();
    bank.state_blocks =
        BlockPartition::from_sizes(j.at("state_blocks").get<std::vector<Index>>());
    bank.input_blocks =
        BlockPartition::from_sizes(j.at("input_blocks").get<std::vector<Index>>());

    for (const auto& entries : j.at("distribution")) {
      std::vector<PatternEntry> list;
      for (const auto& entry : entries) {
        list.push_back(PatternEntry{
            entry.at("receivers").get<std::vector<int>>(),
            entry.at("probability").get<double>()});
      }
      bank.distribution.subsystems.push_back(std::move(list));
    }

    const auto& cert = j.at("certification");
    bank.certification.certified = cert.at("certified").get<bool>();
    bank.certification.worst_residual = cert.at("worst_residual").get<double>();
    bank.certification.worst_subsystem =
        cert.at("worst_subsystem").get<int>();
    bank.certification.worst_pattern = cert.at("worst_pattern").get<int>();
    bank.certification.margin = cert.at("margin").get<double>();

    const Index n = bank.state_blocks.total();
    const Index p = bank.input_blocks.total();
    if (bank.mode == ControllerMode::kOffline) {
      int i = 0;
      for (const auto& col : j.at("columns")) {
        bank.offline_columns.push_back(
            column_from_json(col, n, p, bank.state_blocks.size(i)));
        ++i;
      }
    } else {
      int i = 0;
      for (const auto& per_pattern : j.at("columns")) {
        std::vector<ColumnResponse> list;
        for (const auto& col : per_pattern) {
          list.push_back(
              column_from_json(col, n, p, bank.state_blocks.size(i)));
        }
        bank.online_columns.push_back(std::move(list));
        ++i;
      }
    }
    bank.validate();
    return bank;
  } catch (const json::exception& e) {
    throw IoError("malformed bank file " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Binary format
// ---------------------------------------------------------------------------

void save_bank_binary(const ControllerBank& bank, const std::string& path) {
  bank.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kBinaryVersion);
  put_u32(out, bank.mode == ControllerMode::kOffline ? 0u : 1u);
  put_i64(out, bank.horizon);
  const int count = bank.subsystem_count();
  put_i64(out, count);
  for (Index s : partition_sizes(bank.state_blocks)) put_i64(out, s);
  for (Index s : partition_sizes(bank.input_blocks)) put_i64(out, s);
  put_f64(out, bank.lambda);
  put_u32(out, bank.certification.certified ? 1u : 0u);
  put_f64(out, bank.certification.worst_residual);
  put_i64(out, bank.certification.worst_subsystem);
  put_i64(out, bank.certification.worst_pattern);
  put_f64(out, bank.certification.margin);

  for (int i = 0; i < count; ++i) {
    const auto& entries = bank.distribution.support_of(i);
    put_i64(out, static_cast<std::int64_t>(entries.size()));
    for (const auto& entry : entries) {
      put_i64(out, static_cast<std::int64_t>(entry.receivers.size()));
      for (int rec : entry.receivers) put_i64(out, rec);
      put_f64(out, entry.probability);
    }
  }

  if (bank.mode == ControllerMode::kOffline) {
    for (const auto& col : bank.offline_columns) put_column(out, col);
  } else {
    for (const auto& per_pattern : bank.online_columns) {
      for (const auto& col : per_pattern) put_column(out, col);
    }
  }
  if (!out) throw IoError("failed while writing " + path);
}

ControllerBank load_bank_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path + " is not a controller bank file");
  }
  if (get_u32(in) != kBinaryVersion) {
    throw IoError(path + " uses an unsupported bank version");
  }
  ControllerBank bank;
  bank.mode =
      get_u32(in) == 0 ? ControllerMode::kOffline : ControllerMode::kOnline;
  bank.horizon = static_cast<int>(get_i64(in));
  const auto count64 = get_i64(in);
  if (count64 < 1 || count64 > (std::int64_t{1} << 20)) {
    throw IoError("bank: implausible subsystem count");
  }
  const int count = static_cast<int>(count64);
  if (bank.horizon < 1 || bank.horizon > (1 << 20)) {
    throw IoError("bank: implausible horizon");
  }
  std::vector<Index> state_sizes(static_cast<std::size_t>(count));
  std::vector<Index> input_sizes(static_cast<std::size_t>(count));
  for (auto& s : state_sizes) s = static_cast<Index>(get_i64(in));
  for (auto& s : input_sizes) s = static_cast<Index>(get_i64(in));
  bank.state_blocks = BlockPartition::from_sizes(state_sizes);
  bank.input_blocks = BlockPartition::from_sizes(input_sizes);
  bank.lambda = get_f64(in);
  bank.certification.certified = get_u32(in) != 0;
  bank.certification.worst_residual = get_f64(in);
  bank.certification.worst_subsystem = static_cast<int>(get_i64(in));
  bank.certification.worst_pattern = static_cast<int>(get_i64(in));
  bank.certification.margin = get_f64(in);

  for (int i = 0; i < count; ++i) {
    const auto entry_count = get_i64(in);
    if (entry_count < 1 || entry_count > (std::int64_t{1} << 20)) {
      throw IoError("bank: implausible pattern count");
    }
    std::vector<PatternEntry> entries;
    for (std::int64_t k = 0; k < entry_count; ++k) {
      const auto len = get_i64(in);
      if (len < 1 || len > count) {
        throw IoError("bank: implausible receiver-set length");
      }
      PatternEntry entry;
      entry.receivers.resize(static_cast<std::size_t>(len));
      for (auto& rec : entry.receivers) rec = static_cast<int>(get_i64(in));
      entry.probability = get_f64(in);
      entries.push_back(std::move(entry));
    }
    bank.distribution.subsystems.push_back(std::move(entries));
  }

  const Index n = bank.state_blocks.total();
  const Index p = bank.input_blocks.total();
  if (bank.mode == ControllerMode::kOffline) {
    for (int i = 0; i < count; ++i) {
      bank.offline_columns.push_back(
          get_column(in, bank.horizon, n, p, bank.state_blocks.size(i)));
    }
  } else {
    for (int i = 0; i < count; ++i) {
      std::vector<ColumnResponse> list;
      const std::size_t entries = bank.distribution.support_of(i).size();
      for (std::size_t k = 0; k < entries; ++k) {
        list.push_back(
            get_column(in, bank.horizon, n, p, bank.state_blocks.size(i)));
      }
      bank.online_columns.push_back(std::move(list));
    }
  }
  bank.validate();
  return bank;
}

void save_bank(const ControllerBank& bank, const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    save_bank_text(bank, path);
  } else {
    save_bank_binary(bank, path);
  }
}

ControllerBank load_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char first = 0;
  in.get(first);
  in.close();
  if (first == '{') return load_bank_text(path);
  return load_bank_binary(path);
}

}  // namespace slsdrop
