#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dialsynth {

// Failures in user-supplied content (models, grammars, ontologies, flags).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input documents that cannot be decoded at all (malformed JSON, bad lines).
class FormatError : public Error {
public:
    using Error::Error;
};

struct SourceLoc {
    std::string file;
    int line = 0;
    int column = 0;

    std::string str() const;
};

class ParseError : public Error {
public:
    ParseError(const SourceLoc& loc, const std::string& what);
    const SourceLoc& where() const { return loc_; }

private:
    SourceLoc loc_;
};

inline constexpr std::string_view kSepToken = "<sep>";

// ---------------------------------------------------------------------------
// Slot values

enum class SlotValueKind { value, dontcare, requested };

struct SlotValue {
    SlotValueKind kind = SlotValueKind::value;
    std::string text;

    static SlotValue of(std::string text) { return {SlotValueKind::value, std::move(text)}; }
    static SlotValue dontcare() { return {SlotValueKind::dontcare, {}}; }
    static SlotValue requested() { return {SlotValueKind::requested, {}}; }

    bool is_value() const { return kind == SlotValueKind::value; }
    // "?" for requested, "dontcare" for dontcare, the text otherwise.
    std::string display() const;

    friend bool operator==(const SlotValue&, const SlotValue&) = default;
    friend auto operator<=>(const SlotValue&, const SlotValue&) = default;
};

// Small ordered association slot-name -> value, kept sorted by name.
class SlotSet {
public:
    using Entry = std::pair<std::string, SlotValue>;

    SlotSet() = default;
    SlotSet(std::initializer_list<Entry> init);

    const SlotValue* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }
    void set(std::string name, SlotValue v);
    bool erase(std::string_view name);
    // Adds every entry of `other`; returns false (and leaves *this untouched)
    // when a name is present in both.
    bool add_disjoint(const SlotSet& other);
    void merge(const SlotSet& other);

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    const std::vector<Entry>& entries() const { return entries_; }

    friend bool operator==(const SlotSet&, const SlotSet&) = default;
    friend auto operator<=>(const SlotSet&, const SlotSet&) = default;

private:
    std::vector<Entry> entries_;
};

// Value kinds a non-terminal can produce.
enum class ValueKind { slot_pair, slot_set, scalar, state };

std::string_view to_string(ValueKind k);

// Result of a phrase production's semantic action.
struct SemValue {
    ValueKind kind = ValueKind::slot_set;
    std::string scalar;
    SlotSet slots;

    static SemValue make_scalar(std::string s) { return {ValueKind::scalar, std::move(s), {}}; }
    static SemValue make_pair(std::string slot, SlotValue v)
    {
        SemValue r{ValueKind::slot_pair, {}, {}};
        r.slots.set(std::move(slot), std::move(v));
        return r;
    }
    static SemValue make_set(SlotSet s) { return {ValueKind::slot_set, {}, std::move(s)}; }

    bool is_slots() const { return kind == ValueKind::slot_pair || kind == ValueKind::slot_set; }

    friend bool operator==(const SemValue&, const SemValue&) = default;
    friend auto operator<=>(const SemValue&, const SemValue&) = default;
};

// ---------------------------------------------------------------------------
// Deterministic randomness. std::uniform_int_distribution is implementation
// defined, so bounded draws are done here to keep outputs identical across
// standard libraries.

uint64_t splitmix64(uint64_t x);
uint64_t mix_seed(uint64_t a, uint64_t b);
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) { return mix_seed(mix_seed(a, b), c); }

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

    uint64_t next() { return engine_(); }
    // Uniform in [0, n); n > 0.
    uint64_t below(uint64_t n);
    unsigned __int128 below128(unsigned __int128 n);

private:
    std::mt19937_64 engine_;
};

// k distinct indices drawn uniformly from [0, n), returned ascending.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng);

// Draws with `draw` until k distinct values are seen; returns them ascending.
// Each round only draws the shortfall, so the result is the set of the first
// k distinct draws.
template <typename T, typename Draw>
std::vector<T> distinct_draws(std::size_t k, Draw&& draw)
{
    std::vector<T> out;
    out.reserve(k + k / 2);
    while (out.size() < k) {
        const std::size_t have = out.size();
        for (std::size_t i = have; i < k; ++i) out.push_back(draw());
        std::sort(out.begin() + static_cast<std::ptrdiff_t>(have), out.end());
        std::inplace_merge(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(have), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
    }
    return out;
}

// In-place uniform shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// Hashing and text helpers

uint64_t fnv1a(std::string_view data, uint64_t h = 1469598103934665603ULL);
std::string hex64(uint64_t v);

// Appends a surface piece using the realizer's spacing rule: pieces are
// separated by one space unless the piece starts with . , ? or !
void append_surface(std::string& out, std::string_view piece);

// Rewrites the articles "a"/"an" to agree with the following word.
std::string fix_articles(std::string_view text);

// Whole-word occurrence test (word chars are alphanumerics, '_' and ':').
bool contains_word(std::string_view text, std::string_view needle);

// Replaces whole-word occurrences of each key with its value in one
// left-to-right pass, preferring the longest key at each position.
std::string replace_words(std::string_view text,
                          const std::vector<std::pair<std::string, std::string>>& replacements);

std::string to_lower(std::string_view s);

}  // namespace dialsynth
