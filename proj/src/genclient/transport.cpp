#include "prefdata/genclient/transport.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <thread>

namespace prefdata::genclient {

namespace {

class SlotGuard {
 public:
  SlotGuard(std::counting_semaphore<>& slots, std::atomic<std::size_t>& in_flight, std::atomic<std::size_t>& peak)
      : slots_(slots), in_flight_(in_flight) {
    slots_.acquire();
    const std::size_t now = ++in_flight_;
    std::size_t seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
  }
  ~SlotGuard() {
    --in_flight_;
    slots_.release();
  }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& slots_;
  std::atomic<std::size_t>& in_flight_;
};

}  // namespace

ManagedTransport::ManagedTransport(std::shared_ptr<Transport> inner, int max_in_flight, int max_retries,
                                   std::chrono::milliseconds backoff)
    : inner_(std::move(inner)),
      max_in_flight_(std::max(max_in_flight, 1)),
      max_retries_(std::max(max_retries, 0)),
      backoff_(backoff),
      slots_(std::max(max_in_flight, 1)) {}

json ManagedTransport::post(const std::string& path, const json& body) {
  return post_validated(path, body, nullptr);
}

json ManagedTransport::post_validated(const std::string& path, const json& body, const Validator& validate) {
  for (int attempt = 0;; ++attempt) {
    std::string failure;
    bool retryable = false;
    try {
      SlotGuard slot(slots_, in_flight_, peak_in_flight_);
      ++attempts_;
      json result = inner_->post(path, body);
      if (validate) validate(result);
      return result;
    } catch (const TransportError& e) {
      failure = e.what();
      retryable = e.retryable();
    } catch (const ClientError& e) {
      // Only validator rejections are retried; a malformed payload from the
      // transport itself is final.
      if (!validate) throw;
      failure = e.what();
      retryable = true;
    }
    if (!retryable || attempt >= max_retries_) {
      throw TransportError(path + ": " + failure + " (after " + std::to_string(attempt + 1) + " attempt(s))", false);
    }
    spdlog::warn("{}: attempt {} failed: {}; retrying", path, attempt + 1, failure);
    if (backoff_.count() > 0) std::this_thread::sleep_for(backoff_ * (1LL << std::min(attempt, 10)));
  }
}

}  // namespace prefdata::genclient
