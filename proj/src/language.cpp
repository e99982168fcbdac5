// SPDX-License-Identifier: Apache-2.0
#include "mgt/language.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>

#include "mgt/error.hpp"

namespace mgt {

std::string to_string(TokenKind k) {
  switch (k) {
    case TokenKind::entity: return "entity";
    case TokenKind::relation: return "relation";
    case TokenKind::modifier: return "modifier";
    case TokenKind::determiner: return "determiner";
    case TokenKind::other: return "other";
  }
  return "unknown";
}

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_joiner(unsigned char c) { return c == '-' || c == '_' || c == '\''; }

}  // namespace

bool is_punctuation(const Token& t) {
  return std::none_of(t.surface.begin(), t.surface.end(),
                      [](char c) { return is_word_byte(static_cast<unsigned char>(c)); });
}

const Lexicon& Lexicon::builtin() {
  static const Lexicon lex = [] {
    Lexicon l;
    l.relations = {
        "above",   "across",   "against",     "along",      "around",     "at",
        "atop",    "behind",   "below",       "beneath",    "beside",     "between",
        "by",      "carrying", "contains",    "covering",   "from",       "has",
        "holding", "in",       "in-front-of", "inside",     "into",       "is",
        "left-of", "near",     "next-to",     "of",         "on",         "on-top-of",
        "onto",    "outside",  "over",        "right-of",   "sitting-on", "standing-on",
        "to",      "touching", "under",       "wearing",    "with",       "are"};
    l.modifiers = {"big",   "black",  "blue",   "brown",  "cyan",   "gray",   "green",
                   "large", "matte",  "metal",  "orange", "purple", "red",    "round",
                   "rubber", "shiny", "small",  "square", "tall",   "tiny",   "white",
                   "wooden", "yellow", "short", "dark",   "bright", "empty",  "striped"};
    l.determiners = {"a",    "an",    "the",  "this", "that", "these", "those",
                     "some", "any",   "each", "every", "what", "which", "another"};
    l.entities = {"ball",     "bowl",   "box",    "car",    "cat",    "chair",  "color",
                  "cube",     "cup",    "cylinder", "dog",  "floor",  "man",    "name",
                  "object",   "person", "plate",  "sandwich", "shape", "shirt", "size",
                  "sphere",   "table",  "thing",  "tree",   "wall",   "woman",  "grass"};
    return l;
  }();
  return lex;
}

Lexicon Lexicon::from_json(const nlohmann::json& j) {
  try {
    Lexicon l;
    auto load = [&](const char* key, std::set<std::string>& into, bool required) {
      if (!j.contains(key)) {
        if (required) throw ConfigError(std::string("lexicon is missing \"") + key + "\"");
        return;
      }
      for (const auto& w : j.at(key)) {
        std::string s = w.get<std::string>();
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        into.insert(std::move(s));
      }
    };
    load("relations", l.relations, true);
    load("modifiers", l.modifiers, true);
    load("determiners", l.determiners, true);
    load("entities", l.entities, false);
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed lexicon: ") + e.what());
  }
}

Lexicon Lexicon::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::ordered_json Lexicon::to_json() const {
  nlohmann::ordered_json j;
  j["relations"] = relations;
  j["modifiers"] = modifiers;
  j["determiners"] = determiners;
  j["entities"] = entities;
  return j;
}

std::vector<Token> tokenize(std::string_view input, const Lexicon& lexicon) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < input.size()) {
    const auto c = static_cast<unsigned char>(input[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      std::size_t j = i + 1;
      // Joiners stay inside a word only when a word byte follows them.
      while (j < input.size()) {
        const auto d = static_cast<unsigned char>(input[j]);
        if (is_word_byte(d)) {
          ++j;
        } else if (is_joiner(d) && j + 1 < input.size() &&
                   is_word_byte(static_cast<unsigned char>(input[j + 1]))) {
          j += 2;
        } else {
          break;
        }
      }
      words.emplace_back(input.substr(i, j - i));
      i = j;
    } else {
      words.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }

  std::vector<Token> tokens;
  tokens.reserve(words.size());
  for (auto& w : words) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) {
      return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
    });
    TokenKind kind = TokenKind::other;
    if (lexicon.relations.contains(w)) kind = TokenKind::relation;
    else if (lexicon.modifiers.contains(w)) kind = TokenKind::modifier;
    else if (lexicon.determiners.contains(w)) kind = TokenKind::determiner;
    else if (lexicon.entities.contains(w)) kind = TokenKind::entity;
    tokens.push_back(Token{std::move(w), tokens.size(), kind});
  }

  // A modifier run with no head after it becomes its own head.
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k].kind != TokenKind::modifier) continue;
    const bool last_in_run = k + 1 == tokens.size() || tokens[k + 1].kind != TokenKind::modifier;
    if (!last_in_run) continue;
    const bool has_head = k + 1 < tokens.size() &&
                          (tokens[k + 1].kind == TokenKind::entity ||
                           (tokens[k + 1].kind == TokenKind::other && !is_punctuation(tokens[k + 1])));
    if (!has_head) tokens[k].kind = TokenKind::entity;
  }
  return tokens;
}

namespace {

bool is_head(const Token& t) {
  return t.kind == TokenKind::entity || (t.kind == TokenKind::other && !is_punctuation(t));
}

struct Phrase {
  std::size_t begin;
  std::size_t head;
};

// determiner? modifier* head, starting exactly at `i`.
std::optional<Phrase> match_phrase(std::span<const Token> tokens, std::size_t i) {
  std::size_t j = i;
  if (j < tokens.size() && tokens[j].kind == TokenKind::determiner) ++j;
  while (j < tokens.size() && tokens[j].kind == TokenKind::modifier) ++j;
  if (j < tokens.size() && is_head(tokens[j])) return Phrase{i, j};
  return std::nullopt;
}

}  // namespace

std::vector<Triple> parse_triples(std::span<const Token> tokens) {
  std::vector<Triple> triples;
  std::optional<std::size_t> subject;
  std::optional<std::size_t> pending;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const Token& t = tokens[i];
    if (t.kind == TokenKind::relation) {
      if (subject) pending = i;
      ++i;
    } else if (is_punctuation(t)) {
      subject.reset();
      pending.reset();
      ++i;
    } else if (auto phrase = match_phrase(tokens, i)) {
      if (pending) {
        triples.push_back(Triple{*subject, tokens[*pending].surface, phrase->head, *pending});
        pending.reset();
      }
      subject = phrase->head;
      i = phrase->head + 1;
    } else {
      ++i;
    }
  }
  return triples;
}

Graph build_text_graph(std::span<const Token> tokens, std::span<const Triple> triples) {
  Graph g(tokens.size(), false);
  std::vector<std::string> labels;
  labels.reserve(tokens.size());
  for (const auto& t : tokens) labels.push_back(t.surface);
  g.set_node_labels(std::move(labels));

  for (const auto& tr : triples) g.add_edge(tr.subject, tr.object, tr.relation);
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k].kind != TokenKind::modifier) continue;
    std::size_t h = k + 1;
    while (h < tokens.size() && tokens[h].kind == TokenKind::modifier) ++h;
    if (h < tokens.size() && is_head(tokens[h])) g.add_edge(k, h);
  }
  for (const auto& tr : triples) {
    g.add_edge(tr.relation_token, tr.subject);
    g.add_edge(tr.relation_token, tr.object);
  }
  return g;
}

Graph text_graph(std::string_view question, const Lexicon& lexicon) {
  const auto tokens = tokenize(question, lexicon);
  return build_text_graph(tokens, parse_triples(tokens));
}

Graph semantic_graph(std::string_view text, const Lexicon& lexicon) {
  return text_graph(text, lexicon);
}

Table Table::from_json(const nlohmann::json& j) {
  try {
    Table t;
    t.headers = j.at("headers").get<std::vector<std::string>>();
    t.rows = j.value("rows", std::vector<std::vector<std::string>>{});
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed table JSON: ") + e.what());
  }
}

std::string linearize_table(const Table& table) {
  std::string out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.headers.size()) {
      throw DimensionError("table row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                           " cells, expected " + std::to_string(table.headers.size()));
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!out.empty()) out += ' ';
      out += table.headers[c] + " is " + row[c] + " ;";
    }
  }
  return out;
}

}  // namespace mgt
