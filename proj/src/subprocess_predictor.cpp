#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <vector>

#include "pancal/io.hpp"
#include "pancal/predictor.hpp"

namespace pancal {

namespace {

void write_all(int fd, const uint8_t* data, size_t size) {
  while (size > 0) {
    const ssize_t n = ::write(fd, data, size);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("predictor pipe write failed: ") + strerror(errno));
    }
    data += n;
    size -= static_cast<size_t>(n);
  }
}

void read_all(int fd, uint8_t* data, size_t size) {
  while (size > 0) {
    const ssize_t n = ::read(fd, data, size);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("predictor pipe read failed: ") + strerror(errno));
    }
    if (n == 0) throw std::runtime_error("predictor process closed its output unexpectedly");
    data += n;
    size -= static_cast<size_t>(n);
  }
}

uint64_t get_u64le(const uint8_t* b) {
  uint64_t x = 0;
  for (int i = 7; i >= 0; --i) x = (x << 8) | b[i];
  return x;
}

void put_u64le(uint8_t* b, uint64_t x) {
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(x >> (8 * i));
}

}  // namespace

SubprocessPredictor::SubprocessPredictor(const std::string& command) {
  int to_child[2], from_child[2];
  if (pipe(to_child) != 0 || pipe(from_child) != 0) {
    throw std::runtime_error("failed to create predictor pipes");
  }
  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("failed to fork predictor process");
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);
  child_pid_ = pid;
  to_child_ = to_child[1];
  from_child_ = from_child[0];
}

SubprocessPredictor::~SubprocessPredictor() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (child_pid_ > 0) {
    int status = 0;
    waitpid(child_pid_, &status, 0);
  }
}

DepthMap SubprocessPredictor::predict(const Panorama& image) const {
  const std::vector<uint8_t> png = encode_png(image);
  uint8_t header[8];
  put_u64le(header, png.size());
  write_all(to_child_, header, 8);
  write_all(to_child_, png.data(), png.size());

  read_all(from_child_, header, 8);
  const uint64_t size = get_u64le(header);
  if (size == 0 || size > (1ull << 32)) {
    throw std::runtime_error("predictor process sent an implausible frame size");
  }
  std::vector<uint8_t> payload(size);
  read_all(from_child_, payload.data(), payload.size());
  DepthMap depth = decode_depth(payload.data(), payload.size());
  if (depth.width != image.width || depth.height != image.height) {
    throw std::runtime_error("predictor process returned mismatched dimensions");
  }
  return depth;
}

}  // namespace pancal
