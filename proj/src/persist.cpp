#include "twist/persist.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace twist {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_score(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string() && v.get<std::string>() == "-inf") return kForbidden;
  throw PersistError("score must be a number or \"-inf\"");
}


StepScores row_from_json(const json& j, const Vocabulary& vocab) {
  if (!j.is_object()) throw PersistError("score row must be an object of token -> score");
  double fill = kForbidden;
  if (auto it = j.find("*"); it != j.end()) fill = parse_score(*it);
  StepScores row(vocab.size(), fill);
  for (const auto& [token, value] : j.items()) {
    if (token == "*") continue;
    auto id = vocab.find(token);
    if (!id) throw PersistError("score row names unknown token '" + token + "'");
    row[static_cast<std::size_t>(*id)] = parse_score(value);
  }
  return row;
}

json row_to_json(const StepScores& row, const Vocabulary& vocab) {
  json j = json::object();
  j["*"] = "-inf";
  for (std::size_t w = 0; w < row.size(); ++w)
    if (row[w] != kForbidden) j[vocab.token(static_cast<TokenId>(w))] = row[w];
  return j;
}

std::vector<TokenId> prefix_from_json(const json& j, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& t : j) {
    auto id = vocab.find(t.get<std::string>());
    if (!id) throw PersistError("table prefix names unknown token '" + t.get<std::string>() + "'");
    ids.push_back(*id);
  }
  return ids;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    parts.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return parts;
}

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PersistError("cannot write " + path.string());
  out << bytes;
}

// ---------------------------------------------------------------- Specs

json scheme_to_json(const TokenizationScheme& scheme) {
  json j;
  j["kind"] = scheme_name(scheme);
  if (const auto* ws = std::get_if<WhitespaceScheme>(&scheme)) {
    j["split_contractions"] = ws->split_contractions;
  } else if (const auto* bpe = std::get_if<BpeScheme>(&scheme)) {
    j["marker"] = bpe->marker;
    json merges = json::array();
    for (const auto& [l, r] : bpe->merges) merges.push_back({l, r});
    j["merges"] = std::move(merges);
  }
  return j;
}

TokenizationScheme scheme_from_json(const json& j, const fs::path& base_dir) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "whitespace") return WhitespaceScheme{j.value("split_contractions", false)};
  if (kind == "character") return CharacterScheme{};
  if (kind != "bpe") throw PersistError("unknown tokenization scheme '" + kind + "'");
  BpeScheme bpe;
  bpe.marker = j.value("marker", std::string("@@"));
  if (j.contains("merges_file")) {
    bpe.merges = load_merges(resolve(base_dir, j.at("merges_file").get<std::string>()).string());
  } else {
    for (const auto& m : j.at("merges")) bpe.merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  }
  return bpe;
}

json spec_to_json(const ModelTextSpec& spec) {
  return {{"order", std::string(to_string(spec.order()))},
          {"scheme", scheme_to_json(spec.scheme())},
          {"vocabulary", spec.vocabulary().entries()}};
}

SpecPtr spec_from_json(const json& j, const fs::path& base_dir) {
  try {
    Vocabulary vocab = j.contains("vocabulary_file")
                           ? load_vocabulary(resolve(base_dir, j.at("vocabulary_file").get<std::string>()).string())
                           : Vocabulary::from_entries(j.at("vocabulary").get<std::vector<std::string>>());
    return make_spec(std::move(vocab), scheme_from_json(j.at("scheme"), base_dir),
                     parse_generation_order(j.value("order", std::string("l2r"))));
  } catch (const json::exception& e) {
    throw PersistError(std::string("malformed text spec: ") + e.what());
  } catch (const TextError& e) {
    throw PersistError(std::string("malformed text spec: ") + e.what());
  }
}

// ---------------------------------------------------------------- N-gram files

std::string serialize_ngram(const NGramModel& model) {
  std::ostringstream body;
  const auto& opt = model.options();
  body << "twist-ngram\t" << kNGramFormatVersion << '\n'
       << "order\t" << opt.order << '\n'
       << "k_add\t" << format_double(opt.k_add) << '\n'
       << "copy_bonus\t" << format_double(opt.copy_bonus) << '\n'
       << "spec\t" << spec_to_json(model.spec()).dump() << '\n';
  std::size_t lines = 0;
  for (const auto& table : model.tables())
    for (const auto& [ctx, counts] : table) lines += counts.next.size();
  body << "tables\t" << lines << '\n';
  for (std::size_t m = 0; m < model.tables().size(); ++m) {
    for (const auto& [ctx, counts] : model.tables()[m]) {
      std::string ctx_text;
      for (std::size_t i = 0; i < ctx.size(); ++i) {
        if (i) ctx_text += ' ';
        ctx_text += std::to_string(ctx[i]);
      }
      for (const auto& [token, count] : counts.next)
        body << m << '\t' << ctx_text << '\t' << token << '\t' << count << '\n';
    }
  }
  std::string bytes = body.str();
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", crc_of(bytes));
  return bytes + "checksum\t" + crc + "\n";
}

NGramModel parse_ngram(const std::string& bytes) {
  const std::string magic = "twist-ngram\t";
  if (bytes.compare(0, magic.size(), magic) != 0) throw PersistError("not an n-gram model file");
  const auto first_nl = bytes.find('\n');
  const auto version = bytes.substr(magic.size(), first_nl - magic.size());
  if (version != std::to_string(kNGramFormatVersion))
    throw PersistError("unsupported n-gram model version " + version);

  const auto marker = bytes.rfind("checksum\t");
  if (marker == std::string::npos || (marker > 0 && bytes[marker - 1] != '\n'))
    throw PersistError("n-gram model file has no checksum line");
  std::string stored = bytes.substr(marker + 9);
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  char expected[16];
  std::snprintf(expected, sizeof expected, "%08x", crc_of(std::string_view(bytes).substr(0, marker)));
  if (stored != expected) throw PersistError("n-gram model checksum mismatch");

  std::istringstream in(bytes.substr(0, marker));
  std::string line;
  std::getline(in, line);
  auto field = [&](const std::string& name) {
    if (!std::getline(in, line)) throw PersistError("truncated n-gram model file");
    auto parts = split_tabs(line);
    if (parts.size() != 2 || parts[0] != name) throw PersistError("expected '" + name + "' in n-gram model file");
    return parts[1];
  };
  try {
    NGramOptions opt;
    opt.order = std::stoul(field("order"));
    opt.k_add = std::stod(field("k_add"));
    opt.copy_bonus = std::stod(field("copy_bonus"));
    SpecPtr spec = spec_from_json(json::parse(field("spec")));
    const auto lines = std::stoull(field("tables"));
    NGramTables tables(opt.order);
    for (std::uint64_t i = 0; i < lines; ++i) {
      if (!std::getline(in, line)) throw PersistError("truncated n-gram count table");
      auto parts = split_tabs(line);
      if (parts.size() != 4) throw PersistError("malformed n-gram count line");
      const auto m = std::stoul(parts[0]);
      if (m >= opt.order) throw PersistError("n-gram count line exceeds model order");
      NGramContext ctx;
      std::istringstream ids(parts[1]);
      for (TokenId id; ids >> id;) ctx.push_back(id);
      if (ctx.size() != m) throw PersistError("n-gram context length does not match its order");
      auto& counts = tables[m][ctx];
      const auto c = std::stoull(parts[3]);
      counts.next[static_cast<TokenId>(std::stol(parts[2]))] = c;
      counts.total += c;
    }
    return NGramModel(std::move(spec), opt, std::move(tables));
  } catch (const std::logic_error& e) {  // stoul and friends
    throw PersistError(std::string("malformed n-gram model file: ") + e.what());
  } catch (const json::exception& e) {
    throw PersistError(std::string("malformed n-gram model spec: ") + e.what());
  } catch (const ScoringError& e) {
    throw PersistError(std::string("invalid n-gram model: ") + e.what());
  }
}

void save_ngram(const NGramModel& model, const fs::path& path) { write_file(path, serialize_ngram(model)); }

NGramModel load_ngram(const fs::path& path) { return parse_ngram(read_file(path)); }

// ---------------------------------------------------------------- Table scorers

TableScorer table_scorer_from_json(const json& j, const fs::path& base_dir) {
  try {
    SpecPtr spec = spec_from_json(j.at("spec"), base_dir);
    const auto& vocab = spec->vocabulary();
    TableScorer scorer(spec, row_from_json(j.value("default", json::object()), vocab));
    for (const auto& r : j.value("rows", json::array()))
      scorer.set_row(r.value("source", std::string(TableScorer::kAnySource)), prefix_from_json(r.at("prefix"), vocab),
                     row_from_json(r.at("scores"), vocab));
    for (const auto& r : j.value("positions", json::array()))
      scorer.set_position_row(r.value("source", std::string(TableScorer::kAnySource)),
                              r.at("position").get<std::size_t>(), row_from_json(r.at("scores"), vocab));
    if (j.contains("embeddings")) {
      const auto& e = j.at("embeddings");
      std::vector<std::vector<double>> table(vocab.size());
      std::size_t dim = 0;
      for (const auto& [token, vec] : e.items()) {
        auto id = vocab.find(token);
        if (!id) throw PersistError("embedding for unknown token '" + token + "'");
        table[static_cast<std::size_t>(*id)] = vec.get<std::vector<double>>();
        dim = table[static_cast<std::size_t>(*id)].size();
      }
      for (auto& row : table)
        if (row.empty()) row.assign(dim, 0.0);
      scorer.set_embeddings(std::move(table));
    }
    return scorer;
  } catch (const json::exception& e) {
    throw PersistError(std::string("malformed table scorer: ") + e.what());
  } catch (const ScoringError& e) {
    throw PersistError(std::string("invalid table scorer: ") + e.what());
  }
}

json table_scorer_to_json(const TableScorer& scorer) {
  const auto& vocab = scorer.spec().vocabulary();
  json j;
  j["spec"] = spec_to_json(scorer.spec());
  j["default"] = row_to_json(scorer.default_scores(), vocab);
  json rows = json::array();
  for (const auto& [key, row] : scorer.rows()) {
    json prefix = json::array();
    for (TokenId id : key.second) prefix.push_back(vocab.token(id));
    rows.push_back({{"source", key.first}, {"prefix", prefix}, {"scores", row_to_json(row, vocab)}});
  }
  j["rows"] = std::move(rows);
  json positions = json::array();
  for (const auto& [key, row] : scorer.position_rows())
    positions.push_back({{"source", key.first}, {"position", key.second}, {"scores", row_to_json(row, vocab)}});
  j["positions"] = std::move(positions);
  if (scorer.has_embeddings()) {
    json e = json::object();
    for (std::size_t w = 0; w < vocab.size(); ++w) e[vocab.token(static_cast<TokenId>(w))] = scorer.embedding_table()[w];
    j["embeddings"] = std::move(e);
  }
  return j;
}

TableScorer load_table_scorer(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw PersistError(path.string() + ": " + e.what());
  }
  return table_scorer_from_json(j, path.parent_path());
}

}  // namespace twist
