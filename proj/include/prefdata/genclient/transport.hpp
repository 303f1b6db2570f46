#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <semaphore>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace prefdata::genclient {

using json = nlohmann::json;

// A request could not be completed. Retryable errors (connection failures,
// 429, 5xx) are retried by ManagedTransport; the rest surface immediately.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, bool retryable) : std::runtime_error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

// The server answered but the payload does not have the expected shape.
class ClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON-over-HTTP request/response. Paths are relative to the endpoint base URL
// ("/chat/completions", "/completions", "/embeddings", "/reward").
class Transport {
 public:
  virtual ~Transport() = default;
  virtual json post(const std::string& path, const json& body) = 0;
};

// Adapts a callable; used by tests and by the in-process mocks.
class LambdaTransport : public Transport {
 public:
  using Handler = std::function<json(const std::string&, const json&)>;
  explicit LambdaTransport(Handler handler) : handler_(std::move(handler)) {}
  json post(const std::string& path, const json& body) override { return handler_(path, body); }

 private:
  Handler handler_;
};

// Wraps a transport with an in-flight limit, bounded retries with exponential
// backoff, and request accounting. Safe to share between threads.
class ManagedTransport : public Transport {
 public:
  // Throws ClientError (retryable TransportError) from a validator to reject a
  // well-formed but unusable answer, e.g. the wrong number of choices.
  using Validator = std::function<void(const json&)>;

  ManagedTransport(std::shared_ptr<Transport> inner, int max_in_flight, int max_retries,
                   std::chrono::milliseconds backoff);

  json post(const std::string& path, const json& body) override;
  json post_validated(const std::string& path, const json& body, const Validator& validate);

  // Every attempt made against the inner transport, including retries.
  std::size_t attempts() const { return attempts_.load(); }
  std::size_t peak_in_flight() const { return peak_in_flight_.load(); }
  int max_in_flight() const { return max_in_flight_; }

 private:
  std::shared_ptr<Transport> inner_;
  int max_in_flight_;
  int max_retries_;
  std::chrono::milliseconds backoff_;
  std::counting_semaphore<> slots_;
  std::atomic<std::size_t> attempts_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_in_flight_{0};
};

}  // namespace prefdata::genclient
