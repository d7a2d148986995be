#include "dialsynth/common.hpp"
#include "dialsynth/parallel.hpp"

#include <cctype>
#include <cstdio>
#include <numeric>
#include <unordered_set>

namespace dialsynth {

std::string SourceLoc::str() const
{
    return file + ":" + std::to_string(line) + ":" + std::to_string(column);
}

ParseError::ParseError(const SourceLoc& loc, const std::string& what)
    : Error(loc.str() + ": " + what), loc_(loc)
{
}

std::string SlotValue::display() const
{
    switch (kind) {
    case SlotValueKind::requested: return "?";
    case SlotValueKind::dontcare: return "dontcare";
    case SlotValueKind::value: break;
    }
    return text;
}

SlotSet::SlotSet(std::initializer_list<Entry> init)
{
    for (const auto& e : init) set(e.first, e.second);
}

const SlotValue* SlotSet::find(std::string_view name) const
{
    auto it = std::lower_bound(entries_.begin(), entries_.end(), name,
                               [](const Entry& e, std::string_view n) { return e.first < n; });
    if (it == entries_.end() || it->first != name) return nullptr;
    return &it->second;
}

void SlotSet::set(std::string name, SlotValue v)
{
    auto it = std::lower_bound(entries_.begin(), entries_.end(), name,
                               [](const Entry& e, const std::string& n) { return e.first < n; });
    if (it != entries_.end() && it->first == name) {
        it->second = std::move(v);
        return;
    }
    entries_.insert(it, Entry{std::move(name), std::move(v)});
}

bool SlotSet::erase(std::string_view name)
{
    auto it = std::lower_bound(entries_.begin(), entries_.end(), name,
                               [](const Entry& e, std::string_view n) { return e.first < n; });
    if (it == entries_.end() || it->first != name) return false;
    entries_.erase(it);
    return true;
}

bool SlotSet::add_disjoint(const SlotSet& other)
{
    for (const auto& e : other.entries_)
        if (contains(e.first)) return false;
    merge(other);
    return true;
}

void SlotSet::merge(const SlotSet& other)
{
    for (const auto& e : other.entries_) set(e.first, e.second);
}

std::string_view to_string(ValueKind k)
{
    switch (k) {
    case ValueKind::slot_pair: return "slot_pair";
    case ValueKind::slot_set: return "slot_set";
    case ValueKind::scalar: return "scalar";
    case ValueKind::state: return "state";
    }
    return "?";
}

uint64_t splitmix64(uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t a, uint64_t b)
{
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

uint64_t Rng::below(uint64_t n)
{
    if (n == 0) throw std::logic_error("Rng::below(0)");
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

unsigned __int128 Rng::below128(unsigned __int128 n)
{
    if (n == 0) throw std::logic_error("Rng::below128(0)");
    if (n <= UINT64_MAX) return below(static_cast<uint64_t>(n));
    using u128 = unsigned __int128;
    const u128 max = ~u128{0};
    const u128 limit = max - (max % n);
    u128 x;
    do {
        x = (u128{engine_()} << 64) | engine_();
    } while (x >= limit);
    return x % n;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng)
{
    std::vector<std::size_t> out;
    if (k >= n) {
        out.resize(n);
        std::iota(out.begin(), out.end(), std::size_t{0});
        return out;
    }
    if (k * 4 >= n) {
        // Dense case: partial Fisher-Yates.
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(idx[i], idx[j]);
        }
        out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
        return distinct_draws<std::size_t>(k, [&] { return static_cast<std::size_t>(rng.below(n)); });
    }
    std::sort(out.begin(), out.end());
    return out;
}

uint64_t fnv1a(std::string_view data, uint64_t h)
{
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

static bool attaches(char c)
{
    return c == '.' || c == ',' || c == '?' || c == '!';
}

void append_surface(std::string& out, std::string_view piece)
{
    if (piece.empty()) return;
    if (!out.empty() && !attaches(piece.front())) out += ' ';
    out += piece;
}

static bool is_word_char(char c)
{
    unsigned char u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || c == ':' || u >= 0x80;
}

std::string fix_articles(std::string_view text)
{
    std::string out;
    out.reserve(text.size() + 4);
    std::size_t i = 0;
    while (i < text.size()) {
        bool at_word_start = (i == 0 || !is_word_char(text[i - 1]));
        if (at_word_start && (text[i] == 'a' || text[i] == 'A')) {
            std::size_t len = 0;
            if (i + 1 < text.size() && text[i + 1] == ' ')
                len = 1;
            else if (i + 2 < text.size() && text[i + 1] == 'n' && text[i + 2] == ' ')
                len = 2;
            if (len > 0 && i + len + 1 < text.size()) {
                char next = text[i + len + 1];
                if (std::isalpha(static_cast<unsigned char>(next))) {
                    char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(next)));
                    bool vowel = lower == 'a' || lower == 'e' || lower == 'i' || lower == 'o' || lower == 'u';
                    out += text[i];
                    if (vowel) out += 'n';
                    i += len;
                    continue;
                }
            }
        }
        out += text[i];
        ++i;
    }
    return out;
}

static bool word_match_at(std::string_view text, std::size_t pos, std::string_view needle)
{
    if (needle.empty() || pos + needle.size() > text.size()) return false;
    if (text.compare(pos, needle.size(), needle) != 0) return false;
    if (pos > 0 && is_word_char(text[pos - 1]) && is_word_char(needle.front())) return false;
    std::size_t end = pos + needle.size();
    if (end < text.size() && is_word_char(text[end]) && is_word_char(needle.back())) return false;
    return true;
}

bool contains_word(std::string_view text, std::string_view needle)
{
    for (std::size_t pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + 1))
        if (word_match_at(text, pos, needle)) return true;
    return false;
}

std::string replace_words(std::string_view text,
                          const std::vector<std::pair<std::string, std::string>>& replacements)
{
    std::vector<const std::pair<std::string, std::string>*> order;
    for (const auto& r : replacements)
        if (!r.first.empty()) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(),
                     [](auto* a, auto* b) { return a->first.size() > b->first.size(); });

    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const std::pair<std::string, std::string>* hit = nullptr;
        for (auto* r : order) {
            if (word_match_at(text, i, r->first)) {
                hit = r;
                break;
            }
        }
        if (hit) {
            out += hit->second;
            i += hit->first.size();
        } else {
            out += text[i];
            ++i;
        }
    }
    return out;
}

std::string to_lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void set_thread_count(int n)
{
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

int thread_count()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace dialsynth
