#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "satfields/errors.hpp"

namespace satfields::tensorgrad {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ContractViolation("tensor extent must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Thread-local switch controlling whether ops record the backward graph.
// Turned on inside backward() when building higher-order graphs.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool f = true;
    return f;
  }
};

struct GradModeGuard {
  explicit GradModeGuard(bool on) : prev(GradMode::enabled()) { GradMode::set(on); }
  ~GradModeGuard() { GradMode::set(prev); }
  bool prev;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

template <class T>
struct Node;

// Value-semantic handle to an immutable dense tensor, optionally carrying the
// graph edge that produced it. Copies share the underlying buffer.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, T v);
  static Tensor from_data(Shape s, std::vector<T> v);
  // Leaf sharing an existing buffer (no copy, no graph).
  static Tensor from_buffer(Shape s, std::shared_ptr<std::vector<T>> buf);

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const;
  std::size_t size() const;
  int dim(int i) const;
  const std::vector<T>& data() const;
  std::shared_ptr<std::vector<T>> buffer() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);
  bool is_leaf() const;

  // Accumulated gradient of a leaf after backward(); undefined if never set.
  Tensor grad() const;
  void zero_grad();

  // Same buffer, detached from the graph.
  Tensor detach() const;
  // Fresh copy of the values as a detached leaf.
  Tensor clone_detached() const;

  T item() const;

  Node<T>* node() const { return n_.get(); }
  std::shared_ptr<Node<T>> node_ptr() const { return n_; }

 private:
  std::shared_ptr<Node<T>> n_;
};

template <class T>
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<T>> buf;
  bool requires_grad = false;
  bool leaf = true;
  // Set only while the graph is recorded.
  std::vector<Tensor<T>> parents;
  std::function<std::vector<Tensor<T>>(const Tensor<T>&)> backward_fn;
  // Leaf gradient accumulator.
  Tensor<T> grad_acc;
};

template <class T>
Tensor<T> Tensor<T>::zeros(Shape s) {
  auto n = std::make_shared<Node<T>>();
  const std::size_t cnt = shape_numel(s);
  n->shape = std::move(s);
  n->buf = std::make_shared<std::vector<T>>(cnt, T{0});
  return Tensor<T>(std::move(n));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape s, T v) {
  auto n = std::make_shared<Node<T>>();
  const std::size_t cnt = shape_numel(s);
  n->shape = std::move(s);
  n->buf = std::make_shared<std::vector<T>>(cnt, v);
  return Tensor<T>(std::move(n));
}

template <class T>
Tensor<T> Tensor<T>::from_data(Shape s, std::vector<T> v) {
  if (shape_numel(s) != v.size()) {
    throw ContractViolation("from_data: buffer size does not match shape " + shape_str(s));
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(s);
  n->buf = std::make_shared<std::vector<T>>(std::move(v));
  return Tensor<T>(std::move(n));
}

template <class T>
Tensor<T> Tensor<T>::from_buffer(Shape s, std::shared_ptr<std::vector<T>> buf) {
  if (shape_numel(s) != buf->size()) {
    throw ContractViolation("from_buffer: buffer size does not match shape");
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(s);
  n->buf = std::move(buf);
  return Tensor<T>(std::move(n));
}

template <class T>
const Shape& Tensor<T>::shape() const {
  return n_->shape;
}

template <class T>
std::size_t Tensor<T>::size() const {
  return n_->buf->size();
}

template <class T>
int Tensor<T>::dim(int i) const {
  return n_->shape.at(static_cast<std::size_t>(i));
}

template <class T>
const std::vector<T>& Tensor<T>::data() const {
  return *n_->buf;
}

template <class T>
std::shared_ptr<std::vector<T>> Tensor<T>::buffer() const {
  return n_->buf;
}

template <class T>
bool Tensor<T>::requires_grad() const {
  return n_ && n_->requires_grad;
}

template <class T>
Tensor<T>& Tensor<T>::set_requires_grad(bool v) {
  if (!n_->leaf) throw ContractViolation("requires_grad can only be toggled on leaves");
  n_->requires_grad = v;
  return *this;
}

template <class T>
bool Tensor<T>::is_leaf() const {
  return n_->leaf;
}

template <class T>
Tensor<T> Tensor<T>::grad() const {
  return n_->grad_acc;
}

template <class T>
void Tensor<T>::zero_grad() {
  n_->grad_acc = Tensor<T>();
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from_buffer(n_->shape, n_->buf);
}

template <class T>
Tensor<T> Tensor<T>::clone_detached() const {
  return from_data(n_->shape, *n_->buf);
}

template <class T>
T Tensor<T>::item() const {
  if (size() != 1) throw ContractViolation("item() requires a scalar tensor");
  return (*n_->buf)[0];
}

// Builds the result node of an op. Parents and the backward function are
// recorded only when grad mode is on and some parent requires grad, so
// no-grad evaluation keeps no graph alive.
template <class T>
Tensor<T> make_op_result(Shape shape, std::shared_ptr<std::vector<T>> buf,
                         std::vector<Tensor<T>> parents,
                         std::function<std::vector<Tensor<T>>(const Tensor<T>&)> bwd) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->buf = std::move(buf);
  n->leaf = false;
  bool track = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents) {
      if (p.defined() && p.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(bwd);
  }
  return Tensor<T>(std::move(n));
}

namespace detail {

template <class T>
void topo_visit(Node<T>* n, std::unordered_set<Node<T>*>& seen, std::vector<Node<T>*>& order) {
  // Iterative DFS post-order over grad-requiring nodes.
  struct Frame {
    Node<T>* node;
    std::size_t next;
  };
  std::vector<Frame> stack{{n, 0}};
  seen.insert(n);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      Node<T>* p = f.node->parents[f.next++].node();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

template <class T>
Tensor<T> add_plain(const Tensor<T>& a, const Tensor<T>& b);  // defined in ops.hpp

// Core reverse sweep. Returns the gradient map for all reachable
// grad-requiring nodes. When create_graph is set the gradients are built as
// recorded ops so they can be differentiated again.
template <class T>
std::unordered_map<Node<T>*, Tensor<T>> backward_sweep(const Tensor<T>& root, bool create_graph) {
  if (!root.defined() || root.size() != 1) {
    throw ContractViolation("backward expects a scalar root");
  }
  if (!std::isfinite(static_cast<double>(root.item()))) {
    throw NumericError("backward called on a non-finite loss");
  }
  std::unordered_map<Node<T>*, Tensor<T>> grads;
  if (!root.requires_grad()) return grads;

  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> order;
  topo_visit(root.node(), seen, order);

  grads[root.node()] = Tensor<T>::full(root.shape(), T{1});

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn) continue;  // leaf
    auto git = grads.find(n);
    if (git == grads.end()) continue;
    Tensor<T> gout = git->second;
    GradModeGuard guard(create_graph);
    auto pgrads = n->backward_fn(gout);
    if (pgrads.size() != n->parents.size()) {
      throw ContractViolation("backward_fn returned wrong number of gradients");
    }
    for (std::size_t i = 0; i < pgrads.size(); ++i) {
      const Tensor<T>& p = n->parents[i];
      if (!p.defined() || !p.requires_grad() || !pgrads[i].defined()) continue;
      auto pit = grads.find(p.node());
      if (pit == grads.end()) {
        grads.emplace(p.node(), pgrads[i]);
      } else {
        pit->second = add_plain(pit->second, pgrads[i]);
      }
    }
    if (!create_graph) grads.erase(n);  // free interior grads eagerly
  }
  return grads;
}

}  // namespace detail

// Accumulates gradients into the .grad() of every reachable grad-requiring
// leaf. Parameters not reachable from the loss simply keep an undefined
// (i.e. zero) gradient.
template <class T>
void backward(const Tensor<T>& loss) {
  auto grads = detail::backward_sweep(loss, /*create_graph=*/false);
  for (auto& [node, g] : grads) {
    if (!node->leaf || !node->requires_grad) continue;
    Tensor<T> incoming = g.detach();
    if (node->grad_acc.defined()) {
      NoGradGuard ng;
      node->grad_acc = detail::add_plain(node->grad_acc, incoming).detach();
    } else {
      node->grad_acc = incoming;
    }
  }
}

// Gradients of a scalar w.r.t. an explicit list of tensors, without touching
// .grad(). With create_graph=true the results are differentiable.
template <class T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, const std::vector<Tensor<T>>& inputs,
                            bool create_graph) {
  auto grads = detail::backward_sweep(output, create_graph);
  std::vector<Tensor<T>> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto it = grads.find(in.node());
    if (it == grads.end()) {
      out.push_back(Tensor<T>::zeros(in.shape()));
    } else {
      out.push_back(it->second);
    }
  }
  return out;
}

}  // namespace satfields::tensorgrad
