#pragma once

// Browser-attribute encoding and fingerprint uniqueness statistics.

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agentfp/error.hpp"
#include "agentfp/session.hpp"
#include "json.hpp"

namespace agentfp {

namespace detail {

inline std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = digits[data[i] >> 4];
    out[2 * i + 1] = digits[data[i] & 0xf];
  }
  return out;
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  return to_hex(md, len);
}

// Round-trippable text for a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Plugin and font lists are sets; their order carries no meaning.
inline bool is_unordered_list_attr(std::string_view name) {
  return name.find("plugin") != std::string_view::npos || name.find("font") != std::string_view::npos;
}

inline std::string canonical_value(std::string_view name, const AttrValue& v) {
  nlohmann::json j;
  if (auto s = std::get_if<std::string>(&v)) {
    j = *s;
  } else if (auto d = std::get_if<double>(&v)) {
    return "n:" + format_double(*d);
  } else if (auto b = std::get_if<bool>(&v)) {
    return *b ? "b:true" : "b:false";
  } else {
    auto list = std::get<AttrList>(v);
    if (is_unordered_list_attr(name)) std::sort(list.begin(), list.end());
    j = list;
    return "l:" + j.dump();
  }
  return "s:" + j.dump();
}

// "1440x900" -> {1440, 900}
inline std::optional<std::pair<double, double>> parse_dimensions(std::string_view s) {
  auto x = s.find('x');
  if (x == std::string_view::npos || x == 0 || x + 1 >= s.size()) return std::nullopt;
  auto all_digits = [](std::string_view p) {
    return std::all_of(p.begin(), p.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  auto w = s.substr(0, x), h = s.substr(x + 1);
  if (!all_digits(w) || !all_digits(h)) return std::nullopt;
  return std::pair{std::stod(std::string(w)), std::stod(std::string(h))};
}

}  // namespace detail

struct FingerprintDigest {
  std::string hash;

  friend bool operator==(const FingerprintDigest&, const FingerprintDigest&) = default;
  friend auto operator<=>(const FingerprintDigest&, const FingerprintDigest&) = default;
};

inline std::string canonical_fingerprint_text(const AttrMap& attrs) {
  std::string out;
  for (const auto& [name, value] : attrs) {  // std::map iterates sorted by name
    nlohmann::json k = name;
    out += k.dump();
    out += '=';
    out += detail::canonical_value(name, value);
    out += '\n';
  }
  return out;
}

inline FingerprintDigest canonicalize_fingerprint(const AttrMap& attrs) {
  return {detail::sha256_hex(canonical_fingerprint_text(attrs))};
}

// ---------------------------------------------------------------------------
// Encoder

enum class AttrEncoding { categorical, numeric, dimensions, list };

inline std::string_view to_string(AttrEncoding e) {
  switch (e) {
    case AttrEncoding::categorical: return "categorical";
    case AttrEncoding::numeric: return "numeric";
    case AttrEncoding::dimensions: return "dimensions";
    case AttrEncoding::list: return "list";
  }
  return "?";
}

struct EncodedAttribute {
  std::string name;
  AttrEncoding encoding = AttrEncoding::categorical;
  std::vector<std::string> vocab;  // categories (categorical) or items (list)

  std::size_t width() const {
    switch (encoding) {
      case AttrEncoding::categorical: return vocab.size() + 1;
      case AttrEncoding::numeric: return 1;
      case AttrEncoding::dimensions: return 2;
      case AttrEncoding::list: return vocab.size();
    }
    return 0;
  }

  friend bool operator==(const EncodedAttribute&, const EncodedAttribute&) = default;
};

inline constexpr std::string_view kUnknownCategory = "<unknown>";
inline constexpr std::string_view kEncoderFormat = "agentfp-encoder";
inline constexpr int kEncoderVersion = 1;

// Attribute layout is sorted by attribute name. Categorical attributes take
// |vocab| + 1 one-hot slots (last = unknown). Numeric, dimension and list
// attributes expand to numeric slots: one value, width and height, or one
// membership indicator per known list item.
class AttributeEncoder {
 public:
  AttributeEncoder() = default;
  explicit AttributeEncoder(std::vector<EncodedAttribute> attrs) : attrs_(std::move(attrs)) { index(); }

  const std::vector<EncodedAttribute>& attributes() const { return attrs_; }
  std::size_t total_width() const { return width_; }

  std::map<std::string, std::vector<std::string>> categorical_vocab() const {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& a : attrs_)
      if (a.encoding == AttrEncoding::categorical) out[a.name] = a.vocab;
    return out;
  }

  // Names of every numeric slot, in layout order.
  std::vector<std::string> numeric_attrs() const {
    std::vector<std::string> out;
    for (const auto& a : attrs_) {
      switch (a.encoding) {
        case AttrEncoding::numeric: out.push_back(a.name); break;
        case AttrEncoding::dimensions:
          out.push_back(a.name + ".width");
          out.push_back(a.name + ".height");
          break;
        case AttrEncoding::list:
          for (const auto& item : a.vocab) out.push_back(a.name + "[" + item + "]");
          break;
        default: break;
      }
    }
    return out;
  }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> out;
    out.reserve(width_);
    for (const auto& a : attrs_) {
      switch (a.encoding) {
        case AttrEncoding::categorical:
          for (const auto& v : a.vocab) out.push_back(a.name + "=" + v);
          out.push_back(a.name + "=" + std::string(kUnknownCategory));
          break;
        case AttrEncoding::numeric: out.push_back(a.name); break;
        case AttrEncoding::dimensions:
          out.push_back(a.name + ".width");
          out.push_back(a.name + ".height");
          break;
        case AttrEncoding::list:
          for (const auto& item : a.vocab) out.push_back(a.name + "[" + item + "]");
          break;
      }
    }
    return out;
  }

  std::vector<double> encode(const AttrMap& attrs) const {
    std::vector<double> out(width_, 0.0);
    std::size_t off = 0;
    for (const auto& a : attrs_) {
      auto it = attrs.find(a.name);
      const AttrValue* v = it == attrs.end() ? nullptr : &it->second;
      switch (a.encoding) {
        case AttrEncoding::categorical: {
          std::size_t hot = a.vocab.size();
          if (v) {
            auto key = category_key(*v);
            auto pos = std::find(a.vocab.begin(), a.vocab.end(), key);
            if (pos != a.vocab.end()) hot = static_cast<std::size_t>(pos - a.vocab.begin());
          }
          out[off + hot] = 1.0;
          break;
        }
        case AttrEncoding::numeric: {
          const double* d = v ? std::get_if<double>(v) : nullptr;
          out[off] = d ? *d : -1.0;
          break;
        }
        case AttrEncoding::dimensions: {
          const std::string* s = v ? std::get_if<std::string>(v) : nullptr;
          auto dims = s ? detail::parse_dimensions(*s) : std::nullopt;
          out[off] = dims ? dims->first : -1.0;
          out[off + 1] = dims ? dims->second : -1.0;
          break;
        }
        case AttrEncoding::list: {
          const AttrList* l = v ? std::get_if<AttrList>(v) : nullptr;
          for (std::size_t i = 0; i < a.vocab.size(); ++i) {
            if (!l)
              out[off + i] = -1.0;
            else
              out[off + i] = std::find(l->begin(), l->end(), a.vocab[i]) != l->end() ? 1.0 : 0.0;
          }
          break;
        }
      }
      off += a.width();
    }
    return out;
  }

  std::string serialize() const {
    nlohmann::ordered_json j;
    j["format"] = std::string(kEncoderFormat);
    j["version"] = kEncoderVersion;
    j["total_width"] = width_;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& a : attrs_) {
      nlohmann::ordered_json e;
      e["name"] = a.name;
      e["encoding"] = std::string(to_string(a.encoding));
      if (a.encoding == AttrEncoding::categorical || a.encoding == AttrEncoding::list) e["vocab"] = a.vocab;
      arr.push_back(std::move(e));
    }
    j["attributes"] = std::move(arr);
    return j.dump(2) + "\n";
  }

  static AttributeEncoder deserialize(std::string_view text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw EncoderError(std::string("malformed encoder document: ") + e.what());
    }
    if (j.value("format", "") != kEncoderFormat) throw EncoderError("not an encoder document");
    if (j.value("version", 0) != kEncoderVersion)
      throw EncoderError("unsupported encoder version " + std::to_string(j.value("version", 0)));
    std::vector<EncodedAttribute> attrs;
    for (const auto& e : j.at("attributes")) {
      EncodedAttribute a;
      a.name = e.at("name").get<std::string>();
      auto enc = e.at("encoding").get<std::string>();
      if (enc == "categorical") a.encoding = AttrEncoding::categorical;
      else if (enc == "numeric") a.encoding = AttrEncoding::numeric;
      else if (enc == "dimensions") a.encoding = AttrEncoding::dimensions;
      else if (enc == "list") a.encoding = AttrEncoding::list;
      else throw EncoderError("unknown encoding '" + enc + "'");
      if (e.contains("vocab")) a.vocab = e.at("vocab").get<std::vector<std::string>>();
      attrs.push_back(std::move(a));
    }
    AttributeEncoder out(std::move(attrs));
    if (j.contains("total_width") && j.at("total_width").get<std::size_t>() != out.total_width())
      throw EncoderError("total_width does not match attribute layout");
    return out;
  }

  friend bool operator==(const AttributeEncoder& a, const AttributeEncoder& b) { return a.attrs_ == b.attrs_; }

  static std::string category_key(const AttrValue& v) {
    if (auto s = std::get_if<std::string>(&v)) return *s;
    if (auto b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    if (auto d = std::get_if<double>(&v)) return detail::format_double(*d);
    nlohmann::json j = std::get<AttrList>(v);
    return j.dump();
  }

 private:
  void index() {
    width_ = 0;
    for (const auto& a : attrs_) width_ += a.width();
  }

  std::vector<EncodedAttribute> attrs_;
  std::size_t width_ = 0;
};

inline AttributeEncoder build_encoder(const std::vector<AttrMap>& training) {
  if (training.empty()) throw EncoderError("cannot build an encoder from no attribute maps");

  struct Seen {
    bool all_numbers = true, all_dims = true, all_lists = true;
    std::vector<std::string> values;  // first-seen order
    std::set<std::string> seen;
  };
  std::map<std::string, Seen> by_name;
  for (const auto& attrs : training) {
    for (const auto& [name, value] : attrs) {
      auto& s = by_name[name];
      const auto* str = std::get_if<std::string>(&value);
      if (!std::holds_alternative<double>(value)) s.all_numbers = false;
      if (!str || !detail::parse_dimensions(*str)) s.all_dims = false;
      if (auto l = std::get_if<AttrList>(&value)) {
        for (const auto& item : *l)
          if (s.seen.insert("item:" + item).second) s.values.push_back(item);
      } else {
        s.all_lists = false;
      }
      auto key = AttributeEncoder::category_key(value);
      if (s.seen.insert("cat:" + key).second) s.values.push_back("\x01" + key);
    }
  }

  std::vector<EncodedAttribute> attrs;
  for (auto& [name, s] : by_name) {
    EncodedAttribute a;
    a.name = name;
    if (s.all_numbers) {
      a.encoding = AttrEncoding::numeric;
    } else if (s.all_dims) {
      a.encoding = AttrEncoding::dimensions;
    } else if (s.all_lists) {
      a.encoding = AttrEncoding::list;
      for (const auto& v : s.values)
        if (v.empty() || v[0] != '\x01') a.vocab.push_back(v);
    } else {
      a.encoding = AttrEncoding::categorical;
      for (const auto& v : s.values)
        if (!v.empty() && v[0] == '\x01') a.vocab.push_back(v.substr(1));
    }
    attrs.push_back(std::move(a));
  }
  return AttributeEncoder(std::move(attrs));
}

inline std::vector<double> encode_browser(const AttrMap& attrs, const AttributeEncoder& enc) {
  return enc.encode(attrs);
}

// ---------------------------------------------------------------------------
// Fingerprint statistics

struct FingerprintStats {
  std::size_t total = 0;
  std::size_t unique_count = 0;
  double top1_coverage = 0.0;
  double normalized_entropy = 0.0;
  std::set<ClassLabel> shared_with;
  std::size_t shared_count = 0;  // digests of this class also seen in another class
};

inline double normalized_entropy(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (counts.size() <= 1 || total == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h / std::log2(static_cast<double>(counts.size()));
}

inline std::map<ClassLabel, FingerprintStats> fingerprint_stats(
    const std::map<ClassLabel, std::vector<FingerprintDigest>>& per_class) {
  std::map<ClassLabel, std::map<FingerprintDigest, std::size_t>> freq;
  for (const auto& [cls, digests] : per_class) {
    if (digests.empty())
      throw StatsError("class '" + std::string(to_string(cls)) + "' has no fingerprints");
    auto& f = freq[cls];
    for (const auto& d : digests) ++f[d];
  }
  std::map<ClassLabel, FingerprintStats> out;
  for (const auto& [cls, f] : freq) {
    FingerprintStats st;
    st.total = per_class.at(cls).size();
    st.unique_count = f.size();
    std::vector<std::size_t> counts;
    std::size_t top = 0;
    for (const auto& [d, c] : f) {
      counts.push_back(c);
      top = std::max(top, c);
    }
    st.top1_coverage = static_cast<double>(top) / static_cast<double>(st.total);
    st.normalized_entropy = normalized_entropy(counts);
    for (const auto& [d, c] : f) {
      bool shared = false;
      for (const auto& [other, of] : freq) {
        if (other == cls || !of.contains(d)) continue;
        st.shared_with.insert(other);
        shared = true;
      }
      if (shared) ++st.shared_count;
    }
    out.emplace(cls, std::move(st));
  }
  return out;
}

}  // namespace agentfp
