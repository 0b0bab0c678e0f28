#include "ctpd/data.hpp"
#include "ctpd/error.hpp"

#include <cctype>
#include <cmath>

namespace ctpd::data {

namespace {

std::uint64_t fnv1a(const std::string& token, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // final avalanche so low bits depend on every byte
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

}  // namespace

HashingEmbedder::HashingEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 1) throw ConfigError("note embedding dimension must be positive");
}

std::vector<double> HashingEmbedder::embed(const std::string& text) const {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const auto h = fnv1a(token, seed_);
    const auto idx = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_));
    v[idx] += (h >> 63) ? -1.0 : 1.0;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

AdmissionRecord embed_notes(const AdmissionRecord& record, const NoteEmbedder& embedder) {
  AdmissionRecord out = record;
  for (auto& note : out.notes) {
    if (note.embedding) {
      if (static_cast<int>(note.embedding->size()) != embedder.dim())
        throw ValidationError("admission '" + record.id + "': note embedding has dimension " +
                              std::to_string(note.embedding->size()) + ", expected " +
                              std::to_string(embedder.dim()));
      continue;
    }
    if (!note.text)
      throw ValidationError("admission '" + record.id + "': note has neither text nor embedding");
    note.embedding = embedder.embed(*note.text);
  }
  return out;
}

}  // namespace ctpd::data
