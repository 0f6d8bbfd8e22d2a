#include "milatp/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#if MILATP_HAVE_TIFF
#include <tiffio.h>
#endif

namespace milatp {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  std::transform(tail.begin(), tail.end(), tail.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return tail == suffix;
}

ImageF gray_from_channels(const std::vector<float>& px, Index h, Index w,
                          int channels) {
  ImageF out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const float* p = &px[static_cast<std::size_t>((y * w + x) * channels)];
      if (channels == 1) {
        out(y, x) = p[0];
      } else {
        out(y, x) = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
      }
    }
  }
  return out;
}

ImageF load_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open image file: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path);
  }

  png_init_io(png, f.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  color_type = png_get_color_type(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unsupported PNG channel layout in " + path);
  }

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> raw(static_cast<std::size_t>(h) * rowbytes);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<float> px(static_cast<std::size_t>(h) * w * channels);
  if (bit_depth == 16) {
    // PNG stores 16-bit samples big-endian.
    for (std::size_t i = 0; i < px.size(); ++i) {
      const unsigned hi = raw[2 * i], lo = raw[2 * i + 1];
      px[i] = static_cast<float>((hi << 8) | lo) / 65535.0f;
    }
  } else {
    for (std::size_t i = 0; i < px.size(); ++i)
      px[i] = static_cast<float>(raw[i]) / 255.0f;
  }
  return gray_from_channels(px, static_cast<Index>(h), static_cast<Index>(w),
                            channels);
}

#if MILATP_HAVE_TIFF
ImageF load_tiff(const std::string& path) {
  TIFF* tif = TIFFOpen(path.c_str(), "r");
  if (!tif) throw std::runtime_error("cannot open image file: " + path);

  uint32_t w = 0, h = 0;
  uint16_t bps = 8, spp = 1, planar = PLANARCONFIG_CONTIG;
  TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
  TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
  TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(tif, TIFFTAG_PLANARCONFIG, &planar);

  if (TIFFIsTiled(tif) || planar != PLANARCONFIG_CONTIG ||
      (bps != 8 && bps != 16) || (spp != 1 && spp != 3 && spp != 4)) {
    TIFFClose(tif);
    throw std::runtime_error("unsupported TIFF layout in " + path);
  }

  const int channels = (spp == 1) ? 1 : 3;
  std::vector<float> px(static_cast<std::size_t>(h) * w * channels);
  std::vector<uint8_t> scanline(TIFFScanlineSize(tif));
  for (uint32_t y = 0; y < h; ++y) {
    if (TIFFReadScanline(tif, scanline.data(), y) < 0) {
      TIFFClose(tif);
      throw std::runtime_error("failed to decode TIFF: " + path);
    }
    for (uint32_t x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t s = static_cast<std::size_t>(x) * spp + c;
        float v;
        if (bps == 16) {
          const uint16_t* row16 = reinterpret_cast<uint16_t*>(scanline.data());
          v = static_cast<float>(row16[s]) / 65535.0f;
        } else {
          v = static_cast<float>(scanline[s]) / 255.0f;
        }
        px[(static_cast<std::size_t>(y) * w + x) * channels + c] = v;
      }
    }
  }
  TIFFClose(tif);
  return gray_from_channels(px, static_cast<Index>(h), static_cast<Index>(w),
                            channels);
}
#endif

Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace

ImageF load_image(const std::string& path) {
  if (has_suffix(path, ".tif") || has_suffix(path, ".tiff")) {
#if MILATP_HAVE_TIFF
    return load_tiff(path);
#else
    throw std::runtime_error("TIFF support not built in, cannot read " + path);
#endif
  }
  return load_png(path);
}

void save_png16(const std::string& path, const ImageF& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG: " + path);
  }

  const Index h = img.rows(), w = img.cols();
  png_init_io(png, f.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(w) * 2);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const float clipped = std::min(1.0f, std::max(0.0f, img(y, x)));
      const auto v = static_cast<uint16_t>(std::lround(clipped * 65535.0f));
      row[2 * x] = static_cast<png_byte>(v >> 8);  // PNG stores big-endian
      row[2 * x + 1] = static_cast<png_byte>(v & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageF center_square_crop(const ImageF& img) {
  const Index h = img.rows(), w = img.cols();
  const Index side = std::min(h, w);
  const Index y0 = (h - side) / 2, x0 = (w - side) / 2;
  return img.block(y0, x0, side, side);
}

ImageF resize_bilinear(const ImageF& img, Index out_h, Index out_w) {
  const Index h = img.rows(), w = img.cols();
  if (out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("resize_bilinear: non-positive output size");
  if (h == out_h && w == out_w) return img;

  ImageF out(out_h, out_w);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (Index oy = 0; oy < out_h; ++oy) {
    const double fy = (oy + 0.5) * sy - 0.5;
    Index y0 = static_cast<Index>(std::floor(fy));
    const double wy = fy - y0;
    Index y1 = y0 + 1;
    y0 = std::clamp<Index>(y0, 0, h - 1);
    y1 = std::clamp<Index>(y1, 0, h - 1);
    for (Index ox = 0; ox < out_w; ++ox) {
      const double fx = (ox + 0.5) * sx - 0.5;
      Index x0 = static_cast<Index>(std::floor(fx));
      const double wx = fx - x0;
      Index x1 = x0 + 1;
      x0 = std::clamp<Index>(x0, 0, w - 1);
      x1 = std::clamp<Index>(x1, 0, w - 1);
      const double top = (1.0 - wx) * img(y0, x0) + wx * img(y0, x1);
      const double bot = (1.0 - wx) * img(y1, x0) + wx * img(y1, x1);
      out(oy, ox) = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

ImageF standardize(const ImageF& img, float eps) {
  const double n = static_cast<double>(img.size());
  const double mean = img.cast<double>().sum() / n;
  const double var =
      (img.cast<double>() - mean).square().sum() / n;
  const double scale = 1.0 / std::sqrt(var + static_cast<double>(eps) *
                                                 static_cast<double>(eps));
  return ((img.cast<double>() - mean) * scale).cast<float>();
}

ImageF preprocess(const ImageF& img, Index resolution) {
  return standardize(
      resize_bilinear(center_square_crop(img), resolution, resolution));
}

ImageF flip_horizontal(const ImageF& img) {
  return img.rowwise().reverse();
}

ImageF flip_vertical(const ImageF& img) {
  return img.colwise().reverse();
}

ImageF rotate_reflect(const ImageF& img, double angle_rad) {
  const Index h = img.rows(), w = img.cols();
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  ImageF out(h, w);
  for (Index oy = 0; oy < h; ++oy) {
    for (Index ox = 0; ox < w; ++ox) {
      // Inverse map: rotate the output coordinate back into the source.
      const double dy = oy - cy, dx = ox - cx;
      const double fy = cy + (c * dy - s * dx);
      const double fx = cx + (s * dy + c * dx);
      const Index y0 = static_cast<Index>(std::floor(fy));
      const Index x0 = static_cast<Index>(std::floor(fx));
      const double wy = fy - y0, wx = fx - x0;
      const Index ry0 = reflect_index(y0, h), ry1 = reflect_index(y0 + 1, h);
      const Index rx0 = reflect_index(x0, w), rx1 = reflect_index(x0 + 1, w);
      const double top = (1.0 - wx) * img(ry0, rx0) + wx * img(ry0, rx1);
      const double bot = (1.0 - wx) * img(ry1, rx0) + wx * img(ry1, rx1);
      out(oy, ox) = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

ImageF augment(const ImageF& img, const AugmentConfig& cfg,
               std::uint64_t seed) {
  if (!cfg.enabled) return img;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ImageF out = img;
  if (unit(rng) < cfg.flip_prob) out = flip_horizontal(out);
  if (unit(rng) < cfg.flip_prob) out = flip_vertical(out);

  const double sd = std::sqrt(
      (out.cast<double>() - out.cast<double>().mean()).square().mean());
  const double shift =
      (2.0 * unit(rng) - 1.0) * cfg.brightness_frac * sd;
  out += static_cast<float>(shift);

  const double angle = (2.0 * unit(rng) - 1.0) * cfg.max_rotation_deg *
                       std::acos(-1.0) / 180.0;
  if (angle != 0.0) out = rotate_reflect(out, angle);
  return out;
}

}  // namespace milatp
