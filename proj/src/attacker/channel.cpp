#include "rwdecoy/attacker/channel.hpp"

namespace rwdecoy::attacker {

void RegistrationChannel::push(std::vector<Registration> batch) {
  if (batch.empty()) return;
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw Error(ErrorCode::io, "registration channel is closed");
    queue_.push_back(std::move(batch));
  }
  ready_.notify_one();
}

bool RegistrationChannel::pop(std::vector<Registration>& out) {
  std::unique_lock lock(mutex_);
  ready_.wait(lock, [&] { return closed_ || !queue_.empty(); });
  if (queue_.empty()) return false;
  out = std::move(queue_.front());
  queue_.pop_front();
  return true;
}

void RegistrationChannel::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  ready_.notify_all();
}

AttackerServer::AttackerServer(AttackerDb db) : db_(std::move(db)) {
  consumer_ = std::thread([this] {
    std::vector<Registration> batch;
    while (channel_.pop(batch)) {
      for (const auto& r : batch) db_.register_victim(r);
    }
  });
}

AttackerServer::~AttackerServer() {
  if (consumer_.joinable()) {
    channel_.close();
    consumer_.join();
  }
}

AttackerDb AttackerServer::finish() {
  if (consumer_.joinable()) {
    channel_.close();
    consumer_.join();
  }
  return std::move(db_);
}

}  // namespace rwdecoy::attacker
