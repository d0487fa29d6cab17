#include "cnp/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace cnp {

namespace {

class ByteReader {
 public:
  explicit ByteReader(const std::string& path) : path_(path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    bytes_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(path_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  int peek() const { return pos_ < bytes_.size() ? static_cast<unsigned char>(bytes_[pos_]) : -1; }
  int get() {
    const int c = peek();
    if (c >= 0) ++pos_;
    return c;
  }

  // One header token; whitespace and #-comments (to end of line) skipped.
  std::string token() {
    for (;;) {
      int c = peek();
      if (c < 0) fail("unexpected end of header");
      if (c == '#') {
        while (c >= 0 && c != '\n') c = get();
        continue;
      }
      if (std::isspace(c)) {
        get();
        continue;
      }
      break;
    }
    std::string t;
    while (peek() >= 0 && !std::isspace(peek()) && peek() != '#') t += static_cast<char>(get());
    return t;
  }

  int int_token(const std::string& name) {
    const std::size_t at = pos_;
    const std::string t = token();
    try {
      std::size_t used = 0;
      const int v = std::stoi(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      pos_ = at;
      fail("invalid " + name + " token '" + t + "'");
    }
  }

  const char* payload(std::size_t n) {
    if (pos_ + n > bytes_.size())
      fail("truncated payload, need " + std::to_string(n) + " bytes, have " +
           std::to_string(bytes_.size() - pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

}  // namespace

PnmImage read_pnm(const std::string& path) {
  ByteReader r(path);
  const std::string magic = r.token();
  PnmImage img;
  if (magic == "P5")
    img.channels = 1;
  else if (magic == "P6")
    img.channels = 3;
  else
    r.fail("unsupported magic '" + magic + "' (expected P5 or P6)");
  img.width = r.int_token("width");
  img.height = r.int_token("height");
  img.maxval = r.int_token("maxval");
  if (img.width <= 0 || img.height <= 0) r.fail("non-positive image dimensions");
  if (img.maxval != 255 && img.maxval != 65535)
    r.fail("unsupported maxval " + std::to_string(img.maxval) + " (expected 255 or 65535)");
  // Exactly one whitespace byte separates the header from the payload.
  const int sep = r.get();
  if (sep < 0 || !std::isspace(sep)) r.fail("missing whitespace before payload");

  const std::size_t n = img.sample_count();
  img.pixels.resize(n);
  if (img.maxval == 255) {
    const char* p = r.payload(n);
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<unsigned char>(p[i]);
  } else {
    const char* p = r.payload(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned hi = static_cast<unsigned char>(p[2 * i]);
      const unsigned lo = static_cast<unsigned char>(p[2 * i + 1]);
      img.pixels[i] = static_cast<std::uint16_t>((hi << 8) | lo);
    }
  }
  return img;
}

void write_pnm(const PnmImage& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw IoError("write_pnm: channels must be 1 or 3, got " + std::to_string(img.channels));
  if (img.maxval != 255 && img.maxval != 65535)
    throw IoError("write_pnm: maxval must be 255 or 65535, got " + std::to_string(img.maxval));
  if (img.pixels.size() != img.sample_count())
    throw IoError("write_pnm: pixel buffer size " + std::to_string(img.pixels.size()) +
                  " does not match " + std::to_string(img.width) + "x" +
                  std::to_string(img.height));
  std::string out;
  out += img.channels == 1 ? "P5\n" : "P6\n";
  out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n";
  out += std::to_string(img.maxval) + "\n";
  const std::size_t n = img.sample_count();
  if (img.maxval == 255) {
    out.reserve(out.size() + n);
    for (std::size_t i = 0; i < n; ++i) out += static_cast<char>(img.pixels[i] & 0xff);
  } else {
    out.reserve(out.size() + 2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      out += static_cast<char>((img.pixels[i] >> 8) & 0xff);
      out += static_cast<char>(img.pixels[i] & 0xff);
    }
  }
  atomic_write(path, out);
}

Tensor pnm_to_tensor(const PnmImage& img) {
  Tensor t({1, img.channels, img.height, img.width});
  const float inv = 1.0f / static_cast<float>(img.maxval);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.at(0, c, y, x) =
            img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] * inv;
  return t;
}

PnmImage tensor_to_pnm(const Tensor& t, int maxval) {
  if (t.shape.n != 1 || (t.shape.c != 1 && t.shape.c != 3))
    throw IoError("tensor_to_pnm: need 1x{1|3}xHxW, got " + t.shape.str());
  PnmImage img;
  img.width = t.shape.w;
  img.height = t.shape.h;
  img.channels = t.shape.c;
  img.maxval = maxval;
  img.pixels.resize(img.sample_count());
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        float v = t.at(0, c, y, x);
        v = std::min(1.0f, std::max(0.0f, v));
        img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<std::uint16_t>(std::lround(v * maxval));
      }
  return img;
}

std::pair<Tensor, CropRecord> pad_reflect(const Tensor& t, int multiple) {
  if (multiple < 1) throw ConfigError("pad_reflect: multiple must be >= 1");
  const CropRecord rec{t.shape.h, t.shape.w};
  const int ph = (t.shape.h + multiple - 1) / multiple * multiple;
  const int pw = (t.shape.w + multiple - 1) / multiple * multiple;
  if (ph == t.shape.h && pw == t.shape.w) return {t, rec};
  if (ph - t.shape.h >= t.shape.h || pw - t.shape.w >= t.shape.w)
    throw ConfigError("pad_reflect: image " + std::to_string(t.shape.h) + "x" +
                      std::to_string(t.shape.w) + " too small to reflect-pad to a multiple of " +
                      std::to_string(multiple));
  Tensor out({t.shape.n, t.shape.c, ph, pw});
  // Mirror about the last row/column (edge not repeated).
  auto reflect = [](int i, int n) { return i < n ? i : 2 * n - 2 - i; };
  for (int b = 0; b < t.shape.n; ++b)
    for (int c = 0; c < t.shape.c; ++c)
      for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
          out.at(b, c, y, x) = t.at(b, c, reflect(y, t.shape.h), reflect(x, t.shape.w));
  return {std::move(out), rec};
}

Tensor crop(const Tensor& t, const CropRecord& rec) {
  if (rec.height == t.shape.h && rec.width == t.shape.w) return t;
  if (rec.height > t.shape.h || rec.width > t.shape.w)
    throw ConfigError("crop: record " + std::to_string(rec.height) + "x" +
                      std::to_string(rec.width) + " larger than tensor " + t.shape.str());
  Tensor out({t.shape.n, t.shape.c, rec.height, rec.width});
  for (int b = 0; b < t.shape.n; ++b)
    for (int c = 0; c < t.shape.c; ++c)
      for (int y = 0; y < rec.height; ++y)
        for (int x = 0; x < rec.width; ++x) out.at(b, c, y, x) = t.at(b, c, y, x);
  return out;
}

}  // namespace cnp
