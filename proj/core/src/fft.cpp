#include "umr/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <new>
#include <tuple>
#include <utility>
#include <vector>

#include "umr/error.hpp"

namespace umr {
namespace {

// Plans are created once per (H, W, direction) on fftw_malloc'd buffers and
// executed through the new-array interface, which FFTW documents as
// thread-safe. Planning itself is not.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(std::size_t h, std::size_t w, FftDirection dir) {
    std::lock_guard lock(mutex_);
    const Key key{h, w, dir == FftDirection::Forward};
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    FftwBuffer in(h * w), out(h * w);
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), in.data, out.data,
                                   dir == FftDirection::Forward ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
    if (p == nullptr) fail(ErrorCode::Numerical, "fft2c: FFTW planning failed");
    plans_.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  struct FftwBuffer {
    explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {
      if (data == nullptr) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    fftw_complex* data;
  };

 private:
  using Key = std::tuple<std::size_t, std::size_t, bool>;
  std::mutex mutex_;
  std::map<Key, fftw_plan> plans_;
};

// out[(y+sy)%h][(x+sx)%w] = in[y][x]
void circshift(const double* in, double* out, std::size_t h, std::size_t w, std::size_t sy, std::size_t sx) {
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t oy = (y + sy) % h;
    const double* src = in + y * w;
    double* dst = out + oy * w;
    const std::size_t head = w - sx;  // src[0..head) -> dst[sx..w)
    for (std::size_t x = 0; x < head; ++x) dst[sx + x] = src[x];
    for (std::size_t x = head; x < w; ++x) dst[x - head] = src[x];
  }
}

}  // namespace

void fft2c_inplace(std::span<double> re, std::span<double> im, std::size_t channels, std::size_t height,
                   std::size_t width, FftDirection dir) {
  const std::size_t plane = height * width;
  require(height >= 1 && width >= 1, "fft2c: empty plane");
  require(re.size() == channels * plane && im.size() == channels * plane, "fft2c: buffer size mismatch");
  if (plane == 0) return;

  fftw_plan plan = PlanCache::instance().get(height, width, dir);
  std::vector<double> sr(plane), si(plane);
  PlanCache::FftwBuffer in(plane), out(plane);
  // ifftshift moves the centre sample (h/2, w/2) to the origin.
  const std::size_t isy = height - height / 2, isx = width - width / 2;
  const std::size_t fsy = height / 2, fsx = width / 2;
  const double scale = 1.0 / std::sqrt(static_cast<double>(plane));

  for (std::size_t c = 0; c < channels; ++c) {
    double* pr = re.data() + c * plane;
    double* pi = im.data() + c * plane;
    circshift(pr, sr.data(), height, width, isy % height, isx % width);
    circshift(pi, si.data(), height, width, isy % height, isx % width);
    for (std::size_t i = 0; i < plane; ++i) {
      in.data[i][0] = sr[i];
      in.data[i][1] = si[i];
    }
    fftw_execute_dft(plan, in.data, out.data);
    for (std::size_t i = 0; i < plane; ++i) {
      sr[i] = out.data[i][0] * scale;
      si[i] = out.data[i][1] * scale;
    }
    circshift(sr.data(), pr, height, width, fsy, fsx);
    circshift(si.data(), pi, height, width, fsy, fsx);
  }
}

ComplexTensor fft2c(const ComplexTensor& t, FftDirection dir) {
  ComplexTensor out = t;
  fft2c_inplace(out.re(), out.im(), out.channels(), out.height(), out.width(), dir);
  return out;
}

}  // namespace umr
