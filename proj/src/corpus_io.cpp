#include "fedit/corpus_io.hpp"

#include <nlohmann/json.hpp>

#include <set>
#include <sstream>

#include "fedit/text.hpp"

namespace fedit {
namespace {

using nlohmann::json;

// Calls fn(line_no, object) for every non-empty line. Blank lines are
// rejected too: a JSONL file has no room for them and skipping would hide
// truncation.
template <typename Fn>
void for_each_json_line(std::string_view jsonl, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    std::string_view line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!is_valid_utf8(line)) {
      throw Error(ErrorCode::InvalidUtf8, "line " + std::to_string(line_no));
    }
    if (trim(line).empty()) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": blank line");
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": not an object");
    }
    fn(line_no, obj);
  }
}

std::string required_string(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorCode::MalformedLine,
                "line " + std::to_string(line_no) + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw Error(ErrorCode::MalformedLine,
                "line " + std::to_string(line_no) + ": field '" + key + "' must be a string");
  }
  return it->get<std::string>();
}

void require_nonblank(const std::string& value, const char* key, std::size_t line_no) {
  if (trim(value).empty()) {
    throw Error(ErrorCode::MalformedLine,
                "line " + std::to_string(line_no) + ": field '" + key + "' is blank");
  }
}

}  // namespace

std::size_t GeneratedDataset::kept_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.kept ? 1 : 0;
  return n;
}

std::vector<InstructionPair> GeneratedDataset::kept_pairs() const {
  std::vector<InstructionPair> out;
  for (const auto& p : pairs) {
    if (p.kept) out.push_back(p);
  }
  return out;
}

ClientCorpus parse_corpus(std::string_view jsonl, std::string client_id) {
  ClientCorpus corpus{std::move(client_id), {}};
  std::set<std::string> seen;
  for_each_json_line(jsonl, [&](std::size_t line_no, const json& obj) {
    Document doc;
    doc.id = required_string(obj, "id", line_no);
    doc.text = required_string(obj, "text", line_no);
    if (auto it = obj.find("meta"); it != obj.end() && !it->is_null()) {
      if (!it->is_object()) {
        throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": meta must be an object");
      }
      for (const auto& [k, v] : it->items()) {
        if (!v.is_string()) {
          throw Error(ErrorCode::MalformedLine,
                      "line " + std::to_string(line_no) + ": meta value '" + k + "' must be a string");
        }
        doc.meta.emplace(k, v.get<std::string>());
      }
    }
    require_nonblank(doc.id, "id", line_no);
    require_nonblank(doc.text, "text", line_no);
    if (!seen.insert(doc.id).second) throw Error(ErrorCode::DuplicateId, doc.id);
    corpus.documents.push_back(std::move(doc));
  });
  if (corpus.documents.empty()) {
    throw Error(ErrorCode::MalformedLine, "corpus '" + corpus.client_id + "' has no documents");
  }
  return corpus;
}

ClientCorpus load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path), path.stem().string());
}

std::vector<Example> parse_example_pool(std::string_view jsonl) {
  std::vector<Example> pool;
  for_each_json_line(jsonl, [&](std::size_t line_no, const json& obj) {
    Example ex;
    ex.document.id = "pool-" + std::to_string(line_no - 1);
    ex.document.text = required_string(obj, "document", line_no);
    ex.instruction = required_string(obj, "instruction", line_no);
    ex.response = required_string(obj, "response", line_no);
    ex.domain = optional_string(obj, "domain", line_no);
    require_nonblank(ex.document.text, "document", line_no);
    require_nonblank(ex.instruction, "instruction", line_no);
    require_nonblank(ex.response, "response", line_no);
    if (ex.domain) ex.document.meta.emplace("domain", *ex.domain);
    pool.push_back(std::move(ex));
  });
  return pool;
}

std::vector<Example> load_example_pool(const std::filesystem::path& path) {
  return parse_example_pool(read_file(path));
}

std::string serialize_dataset(const GeneratedDataset& dataset) {
  std::string out;
  for (const auto& p : dataset.pairs) {
    json row = json::object();
    row["instruction"] = p.instruction;
    row["response"] = p.response;
    row["source_doc_id"] = p.source_doc_id;
    if (p.reward_score) row["reward_score"] = *p.reward_score;
    row["kept"] = p.kept;
    out += row.dump();
    out += '\n';
  }
  return out;
}

GeneratedDataset parse_dataset(std::string_view jsonl, std::string client_id) {
  GeneratedDataset dataset{std::move(client_id), {}};
  for_each_json_line(jsonl, [&](std::size_t line_no, const json& obj) {
    InstructionPair p;
    p.instruction = required_string(obj, "instruction", line_no);
    p.response = required_string(obj, "response", line_no);
    p.source_doc_id = required_string(obj, "source_doc_id", line_no);
    if (auto it = obj.find("reward_score"); it != obj.end() && !it->is_null()) {
      if (!it->is_number()) {
        throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": reward_score must be a number");
      }
      p.reward_score = it->get<float>();
    }
    auto kept = obj.find("kept");
    if (kept == obj.end() || !kept->is_boolean()) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": missing boolean field 'kept'");
    }
    p.kept = kept->get<bool>();
    if (p.kept) {
      require_nonblank(p.instruction, "instruction", line_no);
      require_nonblank(p.response, "response", line_no);
    }
    dataset.pairs.push_back(std::move(p));
  });
  return dataset;
}

void save_dataset(const GeneratedDataset& dataset, const std::filesystem::path& path) {
  write_file(path, serialize_dataset(dataset));
}

GeneratedDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.stem().string());
}

std::vector<EvalItem> load_references(const std::filesystem::path& path) {
  std::vector<EvalItem> items;
  std::set<std::string> seen;
  for_each_json_line(read_file(path), [&](std::size_t line_no, const json& obj) {
    EvalItem item;
    required_string(obj, "instruction", line_no);
    item.text = required_string(obj, "reference", line_no);
    item.id = optional_string(obj, "id", line_no).value_or(std::to_string(line_no - 1));
    if (!seen.insert(item.id).second) throw Error(ErrorCode::DuplicateId, item.id);
    items.push_back(std::move(item));
  });
  return items;
}

std::vector<EvalItem> load_responses(const std::filesystem::path& path) {
  std::vector<EvalItem> items;
  std::set<std::string> seen;
  for_each_json_line(read_file(path), [&](std::size_t line_no, const json& obj) {
    EvalItem item{required_string(obj, "id", line_no), required_string(obj, "response", line_no)};
    if (!seen.insert(item.id).second) throw Error(ErrorCode::DuplicateId, item.id);
    items.push_back(std::move(item));
  });
  return items;
}

std::vector<std::string> lint_prompt_markers(const ClientCorpus& corpus) {
  static constexpr std::string_view markers[] = {"[document]:", "[question]:", "[answer]:",
                                                 "### Response:"};
  std::vector<std::string> flagged;
  for (const auto& doc : corpus.documents) {
    for (auto m : markers) {
      if (doc.text.find(m) != std::string::npos) {
        flagged.push_back(doc.id);
        break;
      }
    }
  }
  return flagged;
}

}  // namespace fedit
