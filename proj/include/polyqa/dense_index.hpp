#pragma once

// Exact maximum-inner-product search over contiguous row-major float storage,
// with a checksummed binary file format.

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "polyqa/binary.hpp"
#include "polyqa/encoder.hpp"
#include "polyqa/error.hpp"
#include "polyqa/io.hpp"
#include "polyqa/parallel.hpp"

namespace polyqa {

struct RetrievalResult {
  std::string passage_id;
  double score = 0.0;
  std::size_t rank = 0;

  bool operator==(const RetrievalResult&) const = default;
};

class IndexFormatError : public DataError {
 public:
  enum class Reason { kBadMagic, kTruncated, kChecksumMismatch, kMalformed };

  IndexFormatError(Reason reason, const std::string& what) : DataError(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

// Higher score first; equal scores order by passage id.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b,
                         const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

class DenseIndex {
 public:
  explicit DenseIndex(std::size_t dim = kDefaultDim) : dim_(dim) {
    if (dim == 0) throw UsageError("index dim must be >= 1");
  }

  static DenseIndex build(std::span<const std::pair<std::string, EmbeddingVector>> pairs,
                          std::size_t dim) {
    DenseIndex index(dim);
    index.reserve(pairs.size());
    for (const auto& [id, vec] : pairs) index.add(id, vec);
    return index;
  }

  static DenseIndex build(const std::vector<std::string>& ids,
                          const std::vector<EmbeddingVector>& vectors, std::size_t dim) {
    if (ids.size() != vectors.size()) throw UsageError("build: ids and vectors differ in length");
    DenseIndex index(dim);
    index.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) index.add(ids[i], vectors[i]);
    return index;
  }

  void reserve(std::size_t n) {
    data_.reserve(n * dim_);
    ids_.reserve(n);
    lookup_.reserve(n);
  }

  void add(const std::string& id, const EmbeddingVector& vec) {
    if (vec.dim() != dim_) {
      throw DataError("vector for '" + id + "' has dim " + std::to_string(vec.dim()) +
                      ", index dim is " + std::to_string(dim_));
    }
    add_row(id, vec.values());
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::optional<std::size_t> position(const std::string& id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const DenseIndex& o) const {
    return dim_ == o.dim_ && ids_ == o.ids_ && data_ == o.data_;
  }

  // Exact global top-k. Rows are scanned in blocks; each block keeps its own
  // top-k and the blocks merge deterministically.
  std::vector<RetrievalResult> search(const EmbeddingVector& query, std::size_t k,
                                      std::size_t threads = 1) const {
    check_query(query, k);
    const std::size_t n = size();
    const std::size_t want = std::min(k, n);
    if (want == 0) return {};

    constexpr std::size_t kBlockRows = 4096;
    const std::size_t blocks = (n + kBlockRows - 1) / kBlockRows;
    std::vector<std::vector<Candidate>> partial(blocks);
    const auto q = query.values();
    parallel_for(blocks, [&](std::size_t b) {
      const std::size_t begin = b * kBlockRows;
      const std::size_t end = std::min(n, begin + kBlockRows);
      partial[b] = scan_block(q, begin, end, want);
    }, threads);

    std::vector<Candidate> merged;
    for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
    const auto cmp = [this](const Candidate& a, const Candidate& b) { return before(a, b); };
    std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(want),
                      merged.end(), cmp);
    std::vector<RetrievalResult> out;
    out.reserve(want);
    for (std::size_t r = 0; r < want; ++r) out.push_back({ids_[merged[r].row], merged[r].score, r});
    return out;
  }

  // Element-wise identical to search(); queries run in parallel.
  std::vector<std::vector<RetrievalResult>> search_batch(std::span<const EmbeddingVector> queries,
                                                         std::size_t k,
                                                         std::size_t threads = default_thread_count()) const {
    for (const auto& q : queries) check_query(q, k);
    std::vector<std::vector<RetrievalResult>> out(queries.size());
    parallel_for(queries.size(), [&](std::size_t i) { out[i] = search(queries[i], k); }, threads);
    return out;
  }

  // "XLIDX001", u32 dim, u64 count, count*dim float32 rows, count ids
  // (u16 length + UTF-8 bytes), then CRC-32 of all preceding bytes.
  std::string serialize() const {
    binary::Writer w;
    w.bytes("XLIDX001");
    w.uint<uint32_t>(static_cast<uint32_t>(dim_));
    w.uint<uint64_t>(ids_.size());
    for (float v : data_) w.f32(v);
    for (const auto& id : ids_) {
      if (id.size() > 0xFFFF) throw DataError("passage id longer than 65535 bytes: " + id.substr(0, 40));
      w.uint<uint16_t>(static_cast<uint16_t>(id.size()));
      w.bytes(id);
    }
    w.uint<uint32_t>(crc32_of(w.data()));
    return w.take();
  }

  static DenseIndex deserialize(std::string_view data) {
    using Reason = IndexFormatError::Reason;
    if (data.size() < 8 || data.substr(0, 8) != "XLIDX001") {
      throw IndexFormatError(Reason::kBadMagic, "bad magic");
    }
    try {
      binary::Reader r(data);
      r.bytes(8, "magic");
      const auto dim = r.uint<uint32_t>("dim");
      const auto count = r.uint<uint64_t>("count");
      if (dim == 0) throw IndexFormatError(Reason::kMalformed, "index dim is zero");
      if (count > r.remaining() / 4 / dim) throw binary::TruncatedError("vector block");
      DenseIndex index(dim);
      index.data_.resize(count * dim);
      for (auto& v : index.data_) v = r.f32("vector block");
      index.ids_.reserve(count);
      for (uint64_t i = 0; i < count; ++i) {
        const auto len = r.uint<uint16_t>("id length");
        std::string id(r.bytes(len, "id bytes"));
        if (!index.lookup_.emplace(id, i).second) {
          throw IndexFormatError(Reason::kMalformed, "duplicate passage id '" + id + "'");
        }
        index.ids_.push_back(std::move(id));
      }
      const std::size_t body = r.position();
      const auto stored = r.uint<uint32_t>("checksum");
      if (r.remaining() != 0) throw IndexFormatError(Reason::kMalformed, "trailing bytes after checksum");
      if (stored != crc32_of(data.substr(0, body))) {
        throw IndexFormatError(Reason::kChecksumMismatch, "checksum mismatch");
      }
      return index;
    } catch (const binary::TruncatedError& e) {
      throw IndexFormatError(Reason::kTruncated, e.what());
    }
  }

  void save(const std::string& path) const { io::atomic_write(path, serialize()); }
  static DenseIndex load(const std::string& path) { return deserialize(io::read_file(path)); }

  static uint32_t crc32_of(std::string_view bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in slices.
    constexpr std::size_t kSlice = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kSlice) {
      const std::size_t len = std::min(kSlice, bytes.size() - off);
      crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(len));
    }
    return static_cast<uint32_t>(crc);
  }

 private:
  struct Candidate {
    double score;
    std::size_t row;
  };

  bool before(const Candidate& a, const Candidate& b) const {
    return ranks_before(a.score, ids_[a.row], b.score, ids_[b.row]);
  }

  void check_query(const EmbeddingVector& query, std::size_t k) const {
    if (k == 0) throw UsageError("search: k must be >= 1");
    if (query.dim() != dim_) {
      throw UsageError("search: query dim " + std::to_string(query.dim()) + " != index dim " +
                       std::to_string(dim_));
    }
  }

  void add_row(const std::string& id, std::span<const float> values) {
    if (!lookup_.emplace(id, ids_.size()).second) throw DataError("duplicate passage id '" + id + "'");
    ids_.push_back(id);
    data_.insert(data_.end(), values.begin(), values.end());
  }

  // Four rows at a time for instruction-level parallelism; each row's sum
  // still runs in dimension order, matching dot().
  std::vector<Candidate> scan_block(std::span<const float> q, std::size_t begin, std::size_t end,
                                    std::size_t want) const {
    std::vector<Candidate> heap;
    heap.reserve(want + 1);
    // Max-heap under `before` keeps the current worst candidate at the front.
    const auto cmp = [this](const Candidate& a, const Candidate& b) { return before(a, b); };
    auto offer = [&](double score, std::size_t row) {
      const Candidate c{score, row};
      if (heap.size() < want) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end(), cmp);
      } else if (before(c, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), cmp);
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end(), cmp);
      }
    };
    const float* base = data_.data();
    std::size_t r = begin;
    for (; r + 4 <= end; r += 4) {
      const float* r0 = base + r * dim_;
      const float* r1 = r0 + dim_;
      const float* r2 = r1 + dim_;
      const float* r3 = r2 + dim_;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double qd = q[d];
        s0 += qd * r0[d];
        s1 += qd * r1[d];
        s2 += qd * r2[d];
        s3 += qd * r3[d];
      }
      offer(s0, r);
      offer(s1, r + 1);
      offer(s2, r + 2);
      offer(s3, r + 3);
    }
    for (; r < end; ++r) offer(dot(q, row(r)), r);
    return heap;
  }

  std::size_t dim_;
  std::vector<float> data_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

// Top-k across independently built shards of the same dim.
inline std::vector<RetrievalResult> search_shards(std::span<const DenseIndex> shards,
                                                  const EmbeddingVector& query, std::size_t k) {
  std::vector<RetrievalResult> merged;
  for (const auto& shard : shards) {
    auto part = shard.search(query, k);
    merged.insert(merged.end(), part.begin(), part.end());
  }
  std::sort(merged.begin(), merged.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
    return ranks_before(a.score, a.passage_id, b.score, b.passage_id);
  });
  if (merged.size() > k) merged.resize(k);
  for (std::size_t r = 0; r < merged.size(); ++r) merged[r].rank = r;
  return merged;
}

}  // namespace polyqa
