// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mgt/graph.hpp"

namespace mgt {

enum class TokenKind { entity, relation, modifier, determiner, other };

std::string to_string(TokenKind k);

struct Token {
  std::string surface;
  std::size_t index = 0;
  TokenKind kind = TokenKind::other;

  friend bool operator==(const Token&, const Token&) = default;
};

/// True for tokens made only of punctuation. They are tagged `other` but act
/// as phrase boundaries rather than entity candidates.
bool is_punctuation(const Token& t);

struct Triple {
  std::size_t subject = 0;
  std::string relation;
  std::size_t object = 0;
  /// Position of the relation word itself.
  std::size_t relation_token = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Word lists that drive token tagging.
///
/// File format: {"relations": [...], "modifiers": [...], "determiners": [...]}
/// plus an optional "entities" list. Words absent from every list are tagged
/// `other` and treated as entity candidates by the parser.
struct Lexicon {
  std::set<std::string> relations;
  std::set<std::string> modifiers;
  std::set<std::string> determiners;
  std::set<std::string> entities;

  static const Lexicon& builtin();
  static Lexicon from_json(const nlohmann::json& j);
  static Lexicon from_file(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
};

/// Lowercases, splits on whitespace and punctuation, and tags each token from
/// the lexicon. Hyphenated words ("left-of") stay single tokens; each other
/// punctuation character becomes its own token. A modifier that ends its
/// phrase without a following noun ("color is red") is retagged as an entity
/// so it can serve as the phrase head.
std::vector<Token> tokenize(std::string_view input, const Lexicon& lexicon = Lexicon::builtin());

/// Greedy left-to-right match of ENTITY_PHRASE (REL ENTITY_PHRASE)* where
/// ENTITY_PHRASE = determiner? modifier* head. Each relation joining two
/// phrases yields one triple between the phrase heads; chained relations
/// attach to the previous object. In a run of relation words ("is left-of")
/// the last one joins the phrases; the others are skipped, as are relation
/// words without a phrase on both sides. Punctuation ends a chain.
std::vector<Triple> parse_triples(std::span<const Token> tokens);

/// One node per token, labeled with its surface. Undirected edges join each
/// triple's endpoints (labeled with the relation), each modifier to its
/// phrase head, and each relation word to both of its endpoints.
Graph build_text_graph(std::span<const Token> tokens, std::span<const Triple> triples);

/// Graph for a question string (text graph).
Graph text_graph(std::string_view question, const Lexicon& lexicon = Lexicon::builtin());
/// Graph for a declarative sentence or linearized table (semantic graph).
/// Same grammar as text_graph; kept separate to name the input source.
Graph semantic_graph(std::string_view text, const Lexicon& lexicon = Lexicon::builtin());

struct Table {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;

  static Table from_json(const nlohmann::json& j);
};

/// "<header> is <cell> ;" for every cell, rows in order, joined by spaces.
/// Throws DimensionError when a row's width differs from the header count.
std::string linearize_table(const Table& table);

}  // namespace mgt
