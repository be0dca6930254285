//
// Copyright 2026 The qrel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Single-edit question perturbations that keep the surface form close while
// breaking consistency with the context: swapping an entity for another of
// the same kind, swapping a pronoun within its syntactic group, and negating
// an auxiliary. Entity extraction is a rule-based approximation of NER.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qrel/dataset.hpp"
#include "qrel/error.hpp"
#include "qrel/rng.hpp"
#include "qrel/unicode.hpp"

namespace qrel {

enum class PerturbationKind { entity_swap, pronoun_swap, sentence_negation };

inline std::string_view to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::entity_swap: return "entity_swap";
    case PerturbationKind::pronoun_swap: return "pronoun_swap";
    case PerturbationKind::sentence_negation: return "sentence_negation";
  }
  return "?";
}

inline PerturbationKind parse_perturbation_kind(std::string_view s) {
  if (s == "entity_swap") return PerturbationKind::entity_swap;
  if (s == "pronoun_swap") return PerturbationKind::pronoun_swap;
  if (s == "sentence_negation" || s == "negation") return PerturbationKind::sentence_negation;
  throw PreconditionError("unknown perturbation kind '" + std::string(s) + "'");
}

/// Byte range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct Perturbation {
  PerturbationKind kind;
  std::string original;
  std::string transformed;
  Span edit_span;  // in `transformed`
  std::uint64_t seed = 0;
};

enum class EntitySource { question, context };

struct EntityMention {
  std::string surface;
  EntitySource source;
  bool operator==(const EntityMention&) const = default;
};

inline const std::array<std::string, 3>& entity_groups() {
  static const std::array<std::string, 3> g{"person", "location_org", "number"};
  return g;
}

struct EntityInventory {
  std::map<std::string, std::vector<EntityMention>> groups;

  const std::vector<EntityMention>& group(const std::string& name) const {
    static const std::vector<EntityMention> empty;
    const auto it = groups.find(name);
    return it == groups.end() ? empty : it->second;
  }
  bool contains(const std::string& name, std::string_view surface) const {
    for (const auto& m : group(name)) {
      if (m.surface == surface) return true;
    }
    return false;
  }
};

namespace detail {

struct Word {
  std::string text;
  std::size_t begin;
  std::size_t end;
};

inline bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

/// Words are runs of letters/digits (non-ASCII bytes count as letters) that
/// may contain inner apostrophes, hyphens, and digit separators.
inline std::vector<Word> split_words(std::string_view s) {
  std::vector<Word> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!word_byte(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < s.size()) {
      const auto c = static_cast<unsigned char>(s[j]);
      if (word_byte(c)) {
        ++j;
        continue;
      }
      const bool inner = j + 1 < s.size() && word_byte(static_cast<unsigned char>(s[j + 1]));
      const bool digit_sep = (c == ',' || c == '.') && inner &&
                             std::isdigit(static_cast<unsigned char>(s[j - 1])) &&
                             std::isdigit(static_cast<unsigned char>(s[j + 1]));
      if (inner && (c == '\'' || c == '-' || digit_sep)) {
        j += 1;
        continue;
      }
      break;
    }
    out.push_back({std::string(s.substr(i, j - i)), i, j});
    i = j;
  }
  return out;
}

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_capitalized(std::string_view w) {
  if (w.empty()) return false;
  const auto cps = unicode::decode(w);
  return unicode::is_upper(cps.front().value);
}

inline bool sentence_start(std::string_view s, std::size_t pos) {
  for (std::size_t k = pos; k > 0; --k) {
    const char c = s[k - 1];
    if (c == ' ' || c == '\t' || c == '\n' || c == '"' || c == '\'' || c == '(') continue;
    return c == '.' || c == '?' || c == '!';
  }
  return true;
}

inline bool in_set(const std::set<std::string, std::less<>>& set, std::string_view w) {
  return set.find(lower_ascii(w)) != set.end();
}

inline const std::set<std::string, std::less<>>& function_words() {
  static const std::set<std::string, std::less<>> s{
      "a", "an", "the", "what", "where", "when", "who", "whom", "whose", "which", "why", "how",
      "in", "on", "at", "by", "for", "from", "to", "of", "with", "into", "during", "after",
      "before", "since", "until", "as", "and", "or", "but", "if", "while", "is", "are", "was",
      "were", "do", "does", "did", "has", "have", "had", "can", "could", "will", "would",
      "should", "may", "might", "must", "this", "that", "these", "those", "it", "its", "i",
      "he", "she", "we", "they", "you", "his", "her", "their", "our", "my", "your", "there",
      "according", "besides", "although", "however", "also", "not", "no", "yes", "some", "many",
      "most", "other", "one's", "about", "between", "under", "over", "through", "because"};
  return s;
}

inline const std::set<std::string, std::less<>>& span_connectors() {
  static const std::set<std::string, std::less<>> s{"of", "de", "du", "von", "van", "der", "la", "le"};
  return s;
}

inline const std::set<std::string, std::less<>>& person_titles() {
  static const std::set<std::string, std::less<>> s{
      "mr", "mrs", "ms", "miss", "dr", "doctor", "prof", "professor", "sir", "lady", "lord",
      "king", "queen", "prince", "princess", "president", "senator", "governor", "general",
      "captain", "saint", "st", "pope", "bishop", "emperor", "duke", "count", "judge", "mayor",
      "chancellor", "minister", "father", "sister", "brother", "uncle", "aunt"};
  return s;
}

inline const std::set<std::string, std::less<>>& location_org_suffixes() {
  static const std::set<std::string, std::less<>> s{
      "university", "college", "school", "institute", "academy", "museum", "church", "cathedral",
      "river", "lake", "sea", "ocean", "mountain", "mountains", "island", "islands", "valley",
      "city", "county", "state", "states", "province", "republic", "kingdom", "empire", "park",
      "bay", "street", "avenue", "road", "bridge", "airport", "station", "hall", "palace",
      "castle", "company", "corporation", "corp", "inc", "ltd", "group", "bank", "party",
      "council", "association", "society", "club", "league", "union", "organization",
      "foundation", "agency", "department", "ministry", "army", "navy", "court", "parliament",
      "congress", "senate", "observer", "times", "post", "journal", "news", "network",
      "records", "studios", "hospital", "library", "center", "centre", "stadium", "desert",
      "forest", "coast", "peninsula", "district", "region", "square", "temple", "harbor"};
  return s;
}

inline const std::set<std::string, std::less<>>& location_gazetteer() {
  static const std::set<std::string, std::less<>> s{
      "america", "africa", "asia", "europe", "australia", "antarctica", "england", "britain",
      "scotland", "wales", "ireland", "france", "germany", "italy", "spain", "portugal",
      "russia", "china", "japan", "india", "canada", "mexico", "brazil", "egypt", "greece",
      "rome", "london", "paris", "berlin", "madrid", "moscow", "tokyo", "beijing", "chicago",
      "boston", "york", "california", "texas", "florida", "washington", "sydney", "toronto",
      "normandy", "warsaw", "poland", "vienna", "austria", "sweden", "norway", "denmark",
      "netherlands", "holland", "belgium", "switzerland", "turkey", "iran", "iraq", "israel",
      "korea", "vietnam", "thailand", "indonesia", "argentina", "chile", "peru", "cuba",
      "kenya", "nigeria", "oxford", "cambridge", "harvard", "yale", "stanford", "princeton",
      "google", "apple", "microsoft", "amazon", "nasa", "un", "nato", "eu", "bbc", "fifa"};
  return s;
}

inline const std::set<std::string, std::less<>>& location_prepositions() {
  static const std::set<std::string, std::less<>> s{"in", "at", "from", "to", "near", "across", "into", "outside", "inside"};
  return s;
}

inline const std::set<std::string, std::less<>>& number_words() {
  static const std::set<std::string, std::less<>> s{
      "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
      "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
      "nineteen", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
      "hundred", "thousand", "million", "billion", "first", "second", "third", "fourth",
      "fifth", "sixth", "seventh", "eighth", "ninth", "tenth", "dozen"};
  return s;
}

inline bool is_number_word(std::string_view w) {
  if (w.empty()) return false;
  if (std::isdigit(static_cast<unsigned char>(w.front()))) {
    // 1987, 3,000, 2.5, 1st, 22nd, 1990s, 19th
    std::size_t i = 0;
    while (i < w.size() && (std::isdigit(static_cast<unsigned char>(w[i])) || w[i] == ',' || w[i] == '.')) ++i;
    const std::string rest = lower_ascii(w.substr(i));
    return rest.empty() || rest == "st" || rest == "nd" || rest == "rd" || rest == "th" || rest == "s";
  }
  const std::string l = lower_ascii(w);
  if (number_words().count(l)) return true;
  const auto dash = l.find('-');
  return dash != std::string::npos && number_words().count(l.substr(0, dash)) &&
         number_words().count(l.substr(dash + 1));
}

struct RawEntity {
  std::string group;
  std::string surface;
  std::size_t begin;
};

/// Capitalized words seen away from a sentence start; a sentence-initial
/// word alone only counts as a name if it also appears here.
inline std::set<std::string, std::less<>> inner_capitalized(std::initializer_list<std::string_view> texts) {
  std::set<std::string, std::less<>> out;
  for (auto text : texts) {
    for (const auto& w : split_words(text)) {
      if (is_capitalized(w.text) && !sentence_start(text, w.begin)) out.insert(w.text);
    }
  }
  return out;
}

inline std::vector<RawEntity> scan_entities(std::string_view text,
                                            const std::set<std::string, std::less<>>& known) {
  const auto words = split_words(text);
  std::vector<RawEntity> out;
  std::size_t i = 0;
  while (i < words.size()) {
    const Word& w = words[i];
    if (is_number_word(w.text)) {
      // Merge "3 million", "twenty-five thousand".
      std::size_t j = i + 1;
      while (j < words.size() && is_number_word(words[j].text) &&
             words[j].begin == words[j - 1].end + 1) {
        ++j;
      }
      out.push_back({"number", std::string(text.substr(w.begin, words[j - 1].end - w.begin)), w.begin});
      i = j;
      continue;
    }
    if (!is_capitalized(w.text) || in_set(function_words(), w.text)) {
      ++i;
      continue;
    }
    // Maximal capitalized span, allowing lowercase connectors between
    // capitalized words and titles in front.
    std::size_t j = i + 1;
    while (j < words.size()) {
      if (words[j].begin != words[j - 1].end + 1) break;  // punctuation in between
      if (is_capitalized(words[j].text) && !in_set(function_words(), words[j].text)) {
        ++j;
        continue;
      }
      if (in_set(span_connectors(), words[j].text) && j + 1 < words.size() &&
          is_capitalized(words[j + 1].text) && !in_set(function_words(), words[j + 1].text) &&
          words[j + 1].begin == words[j].end + 1) {
        j += 2;
        continue;
      }
      break;
    }
    std::size_t first = i;
    bool titled = false;
    while (first < j && in_set(person_titles(), words[first].text)) {
      titled = true;
      ++first;
    }
    if (first == j || (j - first == 1 && !titled && sentence_start(text, words[first].begin) &&
                       !known.count(words[first].text) && !in_set(location_gazetteer(), words[first].text))) {
      i = j;
      continue;
    }
    bool loc = false;
    for (std::size_t k = first; k < j; ++k) {
      if (in_set(location_org_suffixes(), words[k].text) || in_set(location_gazetteer(), words[k].text)) loc = true;
    }
    if (!titled && !loc && j - first == 1 && i > 0 && in_set(location_prepositions(), words[i - 1].text)) {
      loc = true;
    }
    const std::string group = (loc && !titled) ? "location_org" : "person";
    out.push_back({group, std::string(text.substr(w.begin, words[j - 1].end - w.begin)), w.begin});
    i = j;
  }
  return out;
}

/// First whole-word occurrence of `needle` in `hay`.
inline std::optional<std::size_t> find_word(std::string_view hay, std::string_view needle) {
  if (needle.empty()) return std::nullopt;
  std::size_t pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string_view::npos) {
    const bool left = pos == 0 || !word_byte(static_cast<unsigned char>(hay[pos - 1]));
    const std::size_t e = pos + needle.size();
    const bool right = e == hay.size() || !word_byte(static_cast<unsigned char>(hay[e]));
    if (left && right) return pos;
    ++pos;
  }
  return std::nullopt;
}

inline Perturbation replace_range(PerturbationKind kind, std::string_view original, std::size_t begin,
                                  std::size_t end, std::string_view replacement, std::uint64_t seed) {
  Perturbation p{kind, std::string(original), {}, {}, seed};
  p.transformed = std::string(original.substr(0, begin));
  p.transformed += replacement;
  p.transformed += original.substr(end);
  p.edit_span = {begin, begin + replacement.size()};
  return p;
}

}  // namespace detail

/// Rule-based entity inventory over the question and context. Numbers come
/// from digit and number-word patterns; person and location/organization
/// names from capitalized spans, a title list, name suffixes, and a small
/// gazetteer. Supplied annotations replace the heuristics when present.
inline EntityInventory extract_entities(std::string_view question, std::string_view context,
                                        const std::optional<EntityAnnotations>& annotations = std::nullopt) {
  EntityInventory inv;
  for (const auto& g : entity_groups()) inv.groups[g];
  auto add = [&](const std::string& group, const std::string& surface, EntitySource src) {
    if (!inv.groups.count(group)) return;
    if (!inv.contains(group, surface)) inv.groups[group].push_back({surface, src});
  };
  if (annotations) {
    for (const auto& [group, surfaces] : *annotations) {
      for (const auto& s : surfaces) {
        if (detail::find_word(question, s)) {
          add(group, s, EntitySource::question);
        } else if (detail::find_word(context, s)) {
          add(group, s, EntitySource::context);
        }
      }
    }
    return inv;
  }
  const auto known = detail::inner_capitalized({question, context});
  for (const auto& e : detail::scan_entities(question, known)) add(e.group, e.surface, EntitySource::question);
  for (const auto& e : detail::scan_entities(context, known)) add(e.group, e.surface, EntitySource::context);
  return inv;
}

/// Replaces one question entity with a different entity of the same group.
/// Returns nullopt when no group has a question entity and an alternative.
inline std::optional<Perturbation> entity_swap(std::string_view question, const EntityInventory& inv,
                                               std::uint64_t seed) {
  struct Option {
    std::string group;
    std::string surface;
    std::size_t pos;
  };
  std::vector<Option> options;
  for (const auto& g : entity_groups()) {
    const auto& members = inv.group(g);
    std::set<std::string> distinct;
    for (const auto& m : members) distinct.insert(m.surface);
    if (distinct.size() < 2) continue;
    for (const auto& m : members) {
      if (const auto pos = detail::find_word(question, m.surface)) options.push_back({g, m.surface, *pos});
    }
  }
  if (options.empty()) return std::nullopt;
  Rng rng(seed);
  const Option& pick = options[rng.below(options.size())];
  std::vector<std::string> alternatives;
  for (const auto& m : inv.group(pick.group)) {
    if (m.surface != pick.surface && std::find(alternatives.begin(), alternatives.end(), m.surface) == alternatives.end()) {
      alternatives.push_back(m.surface);
    }
  }
  const std::string& repl = alternatives[rng.below(alternatives.size())];
  return detail::replace_range(PerturbationKind::entity_swap, question, pick.pos,
                               pick.pos + pick.surface.size(), repl, seed);
}

namespace detail {

enum class PronounRole { subject, object, determiner, possessive, reflexive };

inline const std::vector<std::vector<std::string>>& pronoun_table() {
  static const std::vector<std::vector<std::string>> t{
      {"i", "you", "he", "she", "we", "they"},
      {"me", "you", "him", "her", "us", "them"},
      {"my", "your", "his", "her", "our", "their"},
      {"mine", "yours", "his", "hers", "ours", "theirs"},
      {"myself", "yourself", "himself", "herself", "ourselves", "themselves"}};
  return t;
}

inline std::optional<PronounRole> pronoun_role(const std::vector<Word>& words, std::size_t i) {
  const std::string w = lower_ascii(words[i].text);
  const bool followed = i + 1 < words.size() && words[i + 1].begin == words[i].end + 1 &&
                        !function_words().count(lower_ascii(words[i + 1].text));
  if (w == "her") return followed ? PronounRole::determiner : PronounRole::object;
  if (w == "his") return followed ? PronounRole::determiner : PronounRole::possessive;
  if (w == "you") return PronounRole::subject;
  const auto& t = pronoun_table();
  for (std::size_t r = 0; r < t.size(); ++r) {
    if (std::find(t[r].begin(), t[r].end(), w) != t[r].end()) return static_cast<PronounRole>(r);
  }
  return std::nullopt;
}

inline std::string match_case(std::string_view like, std::string replacement, bool sentence_initial) {
  if (replacement == "i") return "I";
  const bool all_caps = like.size() > 1 && std::all_of(like.begin(), like.end(), [](char c) {
                          return !std::isalpha(static_cast<unsigned char>(c)) || std::isupper(static_cast<unsigned char>(c));
                        });
  if (all_caps) {
    for (auto& c : replacement) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return replacement;
  }
  const bool cap = std::isupper(static_cast<unsigned char>(like.front())) && (like != "I" || sentence_initial);
  if (cap) replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
  return replacement;
}

}  // namespace detail

/// Replaces one personal pronoun with a different one of the same syntactic
/// role, keeping its capitalization.
inline std::optional<Perturbation> pronoun_swap(std::string_view question, std::uint64_t seed) {
  const auto words = detail::split_words(question);
  std::vector<std::pair<std::size_t, detail::PronounRole>> found;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (const auto role = detail::pronoun_role(words, i)) found.emplace_back(i, *role);
  }
  if (found.empty()) return std::nullopt;
  Rng rng(seed);
  const auto [idx, role] = found[rng.below(found.size())];
  const detail::Word& w = words[idx];
  const std::string lw = detail::lower_ascii(w.text);
  std::vector<std::string> alts;
  for (const auto& p : detail::pronoun_table()[static_cast<std::size_t>(role)]) {
    if (p != lw) alts.push_back(p);
  }
  const std::string repl = detail::match_case(w.text, alts[rng.below(alts.size())],
                                              detail::sentence_start(question, w.begin));
  return detail::replace_range(PerturbationKind::pronoun_swap, question, w.begin, w.end, repl, seed);
}

namespace detail {

inline const std::vector<std::string>& auxiliaries() {
  static const std::vector<std::string> a{"is", "are", "was", "were", "do", "does", "did",
                                          "has", "have", "had", "can", "could", "will",
                                          "would", "should", "may", "might", "must"};
  return a;
}

inline bool already_negated(const std::vector<Word>& words) {
  for (const auto& w : words) {
    const std::string l = lower_ascii(w.text);
    if (l == "not" || l == "never" || l == "cannot" || (l.size() > 3 && l.ends_with("n't")) ||
        (l.size() > 3 && l.ends_with("n\xE2\x80\x99t"))) {
      return true;
    }
  }
  return false;
}

inline std::optional<std::string> contraction(std::string_view aux) {
  const std::string l = lower_ascii(aux);
  if (l == "may" || l == "might") return std::nullopt;
  if (l == "can") return std::string(aux) + "'t";
  if (l == "will") return std::string(aux.substr(0, 1)) + "on't";
  return std::string(aux) + "n't";
}

/// Third-person present or past form to (do-form, base form).
inline std::optional<std::pair<std::string, std::string>> do_support(std::string_view verb) {
  const std::string v(verb);
  if (v.size() < 4 || !std::all_of(v.begin(), v.end(), [](char c) { return std::islower(static_cast<unsigned char>(c)); })) {
    return std::nullopt;
  }
  auto ends = [&](std::string_view s) { return v.ends_with(s); };
  if (ends("ss") || ends("us") || ends("is")) return std::nullopt;
  if (ends("ies")) return std::pair{std::string("does"), v.substr(0, v.size() - 3) + "y"};
  if (ends("ches") || ends("shes") || ends("sses") || ends("xes") || ends("zes")) {
    return std::pair{std::string("does"), v.substr(0, v.size() - 2)};
  }
  if (ends("s")) return std::pair{std::string("does"), v.substr(0, v.size() - 1)};
  if (ends("ied")) return std::pair{std::string("did"), v.substr(0, v.size() - 3) + "y"};
  if (ends("ed")) return std::pair{std::string("did"), v.substr(0, v.size() - 2)};
  return std::nullopt;
}

}  // namespace detail

/// Negates one auxiliary or modal ("did" -> "didn't" / "did not"). Without
/// one, a subject wh-question's main verb gets do-support ("What controls"
/// -> "What doesn't control"). Questions already containing a negation are
/// never negated again.
inline std::optional<Perturbation> sentence_negation(std::string_view question, std::uint64_t seed) {
  const auto words = detail::split_words(question);
  if (words.empty() || detail::already_negated(words)) return std::nullopt;
  Rng rng(seed);
  std::vector<std::size_t> aux;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::string l = detail::lower_ascii(words[i].text);
    if (std::find(detail::auxiliaries().begin(), detail::auxiliaries().end(), l) != detail::auxiliaries().end()) {
      aux.push_back(i);
    }
  }
  if (!aux.empty()) {
    const detail::Word& w = words[aux[rng.below(aux.size())]];
    const auto contracted = detail::contraction(w.text);
    const bool contract = rng.coin();
    const std::string repl = (contracted && contract) ? *contracted : w.text + " not";
    return detail::replace_range(PerturbationKind::sentence_negation, question, w.begin, w.end, repl, seed);
  }
  if (words.size() >= 2) {
    const std::string first = detail::lower_ascii(words[0].text);
    if (first == "what" || first == "who" || first == "which") {
      const detail::Word& v = words[1];
      if (const auto ds = detail::do_support(v.text)) {
        const bool contract = rng.coin();
        const std::string repl = ds->first + (contract ? "n't " : " not ") + ds->second;
        return detail::replace_range(PerturbationKind::sentence_negation, question, v.begin, v.end, repl, seed);
      }
    }
  }
  return std::nullopt;
}

inline std::optional<Perturbation> perturb(PerturbationKind kind, std::string_view question,
                                           std::string_view context,
                                           const std::optional<EntityAnnotations>& annotations,
                                           std::uint64_t seed) {
  switch (kind) {
    case PerturbationKind::entity_swap:
      return entity_swap(question, extract_entities(question, context, annotations), seed);
    case PerturbationKind::pronoun_swap:
      return pronoun_swap(question, seed);
    case PerturbationKind::sentence_negation:
      return sentence_negation(question, seed);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Labeled sets.

struct AdversarialRow {
  std::string id;
  std::string question;
  std::string context;
  std::string label;  // "positive" or "negative"
  std::string kind;   // "original" or a perturbation kind
  std::uint64_t seed = 0;
  std::string original_id;
  std::optional<Span> edit_span;
};

struct AdversarialRequest {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::vector<PerturbationKind> kinds{PerturbationKind::entity_swap, PerturbationKind::pronoun_swap,
                                      PerturbationKind::sentence_negation};
  std::uint64_t seed = 0;
};

inline const std::string& anchor_question(const EvalRecord& r) {
  if (!r.candidate.empty() || r.references.empty()) return r.candidate;
  return r.references.front();
}

/// Positives are the unmodified anchor questions; negatives are perturbed
/// anchors, cycling through the requested kinds and moving on to the next
/// kind when one does not apply. Anchors are visited in a seeded order.
/// Returns positives first, then negatives; emits a diagnostic when the
/// dataset cannot supply the requested counts.
inline std::vector<AdversarialRow> build_adversarial_set(const std::vector<EvalRecord>& records,
                                                         const AdversarialRequest& req) {
  if (records.empty()) throw PreconditionError("dataset is empty");
  if (req.kinds.empty() && req.negatives > 0) throw PreconditionError("no perturbation kinds requested");
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(req.seed, "anchor-order"));
  rng.shuffle(order);

  std::vector<AdversarialRow> pos;
  for (std::size_t k = 0; k < order.size() && pos.size() < req.positives; ++k) {
    const EvalRecord& r = records[order[k]];
    const std::string& q = anchor_question(r);
    if (q.empty()) continue;
    pos.push_back({r.id + "#original", q, r.context, "positive", "original", 0, r.id, std::nullopt});
  }

  std::vector<AdversarialRow> neg;
  std::size_t next_kind = 0;
  for (std::size_t k = 0; k < order.size() && neg.size() < req.negatives; ++k) {
    const EvalRecord& r = records[order[k]];
    const std::string& q = anchor_question(r);
    if (q.empty()) continue;
    for (std::size_t t = 0; t < req.kinds.size(); ++t) {
      const PerturbationKind kind = req.kinds[(next_kind + t) % req.kinds.size()];
      const std::uint64_t s = derive_seed(req.seed, to_string(kind), order[k]);
      const auto p = perturb(kind, q, r.context, r.entities, s);
      if (!p) continue;
      neg.push_back({r.id + "#" + std::string(to_string(kind)), p->transformed, r.context, "negative",
                     std::string(to_string(kind)), s, r.id, p->edit_span});
      next_kind = (next_kind + t + 1) % req.kinds.size();
      break;
    }
  }
  if (pos.size() < req.positives || neg.size() < req.negatives) {
    diagnostic("adversarial set is partial: " + std::to_string(pos.size()) + "/" +
               std::to_string(req.positives) + " positives, " + std::to_string(neg.size()) + "/" +
               std::to_string(req.negatives) + " negatives");
  }
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

inline nlohmann::ordered_json to_json(const AdversarialRow& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["question"] = r.question;
  j["context"] = r.context;
  j["label"] = r.label;
  j["kind"] = r.kind;
  j["seed"] = r.seed;
  j["original_id"] = r.original_id;
  if (r.edit_span) j["edit_span"] = {r.edit_span->begin, r.edit_span->end};
  return j;
}

}  // namespace qrel
