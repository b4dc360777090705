#include "rwdecoy/cryptodetect/cfs.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include <json.hpp>

namespace rwdecoy::cryptodetect {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint8_t gf_mul(std::uint8_t a, std::uint8_t b) {
  std::uint8_t p = 0;
  while (b) {
    if (b & 1) p ^= a;
    const bool hi = a & 0x80;
    a = static_cast<std::uint8_t>(a << 1);
    if (hi) a ^= 0x1b;
    b >>= 1;
  }
  return p;
}

}  // namespace

const std::array<std::uint8_t, 256>& aes_sbox() {
  static const std::array<std::uint8_t, 256> box = [] {
    std::array<std::uint8_t, 256> s{};
    for (int x = 0; x < 256; ++x) {
      std::uint8_t inv = 0;
      if (x != 0) {
        for (int y = 1; y < 256; ++y) {
          if (gf_mul(static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y)) == 1) {
            inv = static_cast<std::uint8_t>(y);
            break;
          }
        }
      }
      auto rotl8 = [](std::uint8_t v, int k) { return static_cast<std::uint8_t>((v << k) | (v >> (8 - k))); };
      s[x] = static_cast<std::uint8_t>(inv ^ rotl8(inv, 1) ^ rotl8(inv, 2) ^ rotl8(inv, 3) ^ rotl8(inv, 4) ^ 0x63);
    }
    return s;
  }();
  return box;
}

Bytes canonical_features(const CfsFeatures& features) {
  std::vector<Bytes> constants = features.constants;
  std::sort(constants.begin(), constants.end());
  std::vector<std::string> grams;
  for (const auto& g : features.opcode_ngrams) {
    std::string joined;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i) joined += ' ';
      joined += g[i];
    }
    grams.push_back(std::move(joined));
  }
  std::sort(grams.begin(), grams.end());

  Bytes out{'C', 'F', 'S', '1'};
  put_u32(out, static_cast<std::uint32_t>(constants.size()));
  for (const auto& c : constants) {
    put_u32(out, static_cast<std::uint32_t>(c.size()));
    out.insert(out.end(), c.begin(), c.end());
  }
  put_u32(out, static_cast<std::uint32_t>(grams.size()));
  for (const auto& g : grams) {
    put_u32(out, static_cast<std::uint32_t>(g.size()));
    out.insert(out.end(), g.begin(), g.end());
  }
  put_u32(out, features.cfg_shape.blocks);
  put_u32(out, features.cfg_shape.loops);
  return out;
}

CfsSignature derive_cfs(const CfsFeatures& features, CfsMeta meta) {
  const bool has_cfg = features.cfg_shape.blocks != 0 || features.cfg_shape.loops != 0;
  if (features.constants.empty() && features.opcode_ngrams.empty() && !has_cfg) {
    throw Error(ErrorCode::no_features, "feature record is empty");
  }
  const bool scannable = std::any_of(features.constants.begin(), features.constants.end(),
                                     [](const Bytes& c) { return c.size() >= kMinConstantLength; });
  if (!scannable) {
    throw Error(ErrorCode::no_features, "signature needs a constant of at least 16 bytes");
  }
  CfsSignature sig;
  sig.digest = sha256(canonical_features(features));
  sig.meta = std::move(meta);
  sig.constants = features.constants;
  std::sort(sig.constants.begin(), sig.constants.end());
  return sig;
}

CfsScanner::CfsScanner(std::vector<CfsSignature> signatures) : signatures_(std::move(signatures)) {
  auto new_node = [this] {
    Node n;
    n.next.fill(-1);
    nodes_.push_back(std::move(n));
    return static_cast<std::int32_t>(nodes_.size() - 1);
  };
  new_node();
  for (std::size_t s = 0; s < signatures_.size(); ++s) {
    for (std::size_t c = 0; c < signatures_[s].constants.size(); ++c) {
      const Bytes& pat = signatures_[s].constants[c];
      if (pat.empty()) continue;
      std::int32_t cur = 0;
      for (std::uint8_t b : pat) {
        if (nodes_[cur].next[b] < 0) {
          const std::int32_t n = new_node();
          nodes_[cur].next[b] = n;
        }
        cur = nodes_[cur].next[b];
      }
      nodes_[cur].outputs.push_back(static_cast<std::uint32_t>(pattern_owner_.size()));
      pattern_owner_.emplace_back(s, c);
    }
  }
  // Breadth-first failure links, completing the goto function into a DFA.
  std::deque<std::int32_t> queue;
  for (int b = 0; b < 256; ++b) {
    std::int32_t& t = nodes_[0].next[b];
    if (t < 0) {
      t = 0;
    } else {
      nodes_[t].fail = 0;
      queue.push_back(t);
    }
  }
  while (!queue.empty()) {
    const std::int32_t u = queue.front();
    queue.pop_front();
    const std::int32_t f = nodes_[u].fail;
    nodes_[u].outputs.insert(nodes_[u].outputs.end(), nodes_[f].outputs.begin(), nodes_[f].outputs.end());
    for (int b = 0; b < 256; ++b) {
      std::int32_t v = nodes_[u].next[b];
      if (v < 0) {
        nodes_[u].next[b] = nodes_[f].next[b];
      } else {
        nodes_[v].fail = nodes_[f].next[b];
        queue.push_back(v);
      }
    }
  }
}

std::vector<CfsMatch> CfsScanner::scan(std::span<const std::uint8_t> image) const {
  constexpr std::size_t kMemoLimit = 4096;
  std::string key(reinterpret_cast<const char*>(image.data()), image.size());
  {
    std::lock_guard lk(memo_mu_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  auto out = scan_uncached(image);
  std::lock_guard lk(memo_mu_);
  if (memo_.size() >= kMemoLimit) memo_.clear();
  memo_.emplace(std::move(key), out);
  return out;
}

std::vector<CfsMatch> CfsScanner::scan_uncached(std::span<const std::uint8_t> image) const {
  std::vector<bool> seen(pattern_owner_.size(), false);
  std::int32_t state = 0;
  for (std::uint8_t b : image) {
    state = nodes_[state].next[b];
    for (auto pid : nodes_[state].outputs) seen[pid] = true;
  }
  std::vector<CfsMatch> out;
  for (std::size_t s = 0; s < signatures_.size(); ++s) {
    const auto& consts = signatures_[s].constants;
    if (consts.empty()) continue;
    bool all = true;
    for (std::size_t pid = 0; pid < pattern_owner_.size(); ++pid) {
      if (pattern_owner_[pid].first == s && !seen[pid]) all = false;
    }
    if (all) out.push_back({s, signatures_[s].meta.algorithm});
  }
  return out;
}

std::vector<CfsMatch> scan_code_cfs(std::span<const std::uint8_t> image, const std::vector<CfsSignature>& signatures) {
  return CfsScanner(signatures).scan(image);
}

std::string cfs_to_json(const CfsSignature& sig) {
  using nlohmann::json;
  json consts = json::array();
  for (const auto& c : sig.constants) consts.push_back(to_hex(c));
  return json{{"digest", to_hex(sig.digest)},
              {"meta",
               {{"library_name", sig.meta.library_name},
                {"algorithm", sig.meta.algorithm},
                {"constant_ids", sig.meta.constant_ids}}},
              {"constants", consts}}
      .dump(2);
}

CfsSignature cfs_from_json(std::string_view text, const std::string& source) {
  using nlohmann::json;
  auto fail = [&](const std::string& field) {
    return Error(ErrorCode::format, source + ": field '" + field + "' is missing or invalid");
  };
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::format, source + ": not valid JSON");
  }
  CfsSignature sig;
  if (!doc.contains("digest") || !doc["digest"].is_string()) throw fail("digest");
  Bytes d;
  try {
    d = from_hex(doc["digest"].get<std::string>());
  } catch (const Error&) {
    throw fail("digest");
  }
  if (d.size() != 32) throw fail("digest");
  std::copy(d.begin(), d.end(), sig.digest.begin());
  if (!doc.contains("meta") || !doc["meta"].is_object()) throw fail("meta");
  const json& m = doc["meta"];
  sig.meta.library_name = m.value("library_name", "");
  sig.meta.algorithm = m.value("algorithm", "");
  if (m.contains("constant_ids")) sig.meta.constant_ids = m["constant_ids"].get<std::vector<std::string>>();
  if (!doc.contains("constants") || !doc["constants"].is_array()) throw fail("constants");
  bool scannable = false;
  for (std::size_t i = 0; i < doc["constants"].size(); ++i) {
    const json& c = doc["constants"][i];
    if (!c.is_string()) throw fail("constants[" + std::to_string(i) + "]");
    try {
      sig.constants.push_back(from_hex(c.get<std::string>()));
    } catch (const Error&) {
      throw fail("constants[" + std::to_string(i) + "]");
    }
    scannable = scannable || sig.constants.back().size() >= kMinConstantLength;
  }
  if (!scannable) throw fail("constants");
  return sig;
}

std::vector<CfsSignature> default_signatures() {
  const auto& box = aes_sbox();
  CfsFeatures aes;
  aes.constants = {Bytes(box.begin(), box.end())};
  aes.opcode_ngrams = {{"aesenc", "aesenc", "aesenc", "aesenclast"}};
  aes.cfg_shape = {9, 1};

  const std::string sigma = "expand 32-byte k";
  CfsFeatures chacha;
  chacha.constants = {Bytes(sigma.begin(), sigma.end())};
  chacha.opcode_ngrams = {{"add", "xor", "rol", "add"}};
  chacha.cfg_shape = {4, 1};

  return {derive_cfs(aes, {"generic", "AES", {"aes_sbox"}}),
          derive_cfs(chacha, {"generic", "ChaCha20", {"chacha_sigma"}})};
}

}  // namespace rwdecoy::cryptodetect
