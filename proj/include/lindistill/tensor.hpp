#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace lindistill {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Only float64 is implemented; the tag exists so serialized tensors are
// self-describing.
enum class DType : std::uint8_t { f64 = 0 };

// Vectorized kernels pick their loop split from the buffer address, so
// every numeric buffer starts on a cache line to keep results bitwise
// reproducible from run to run.
template <class T>
struct CacheAligned {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    CacheAligned() = default;
    template <class U>
    CacheAligned(const CacheAligned<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t n) noexcept { ::operator delete(p, n * sizeof(T), kAlign); }

    template <class U>
    bool operator==(const CacheAligned<U>&) const noexcept {
        return true;
    }
};

using Buffer = std::vector<double, CacheAligned<double>>;

struct Node;

// Dense row-major array with optional reverse-mode history. Copies share
// the underlying node (reference semantics, like a framework tensor handle);
// use clone() for an independent copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;
    DType dtype() const { return DType::f64; }

    std::span<const double> values() const;
    // Direct write access; bypasses history. Meant for initializers and
    // optimizer updates on leaf parameters.
    std::span<double> mutable_values();
    double item() const;
    double value(std::size_t flat_index) const { return values()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Populates grad on every reachable leaf that requires it. Leaves
    // accumulate across calls; interior nodes are reseeded each call.
    void backward() const;

    // Copy of the values with no history.
    Tensor detach() const;
    // Independent leaf copy that keeps the requires_grad flag.
    Tensor clone() const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }
    std::uint64_t node_id() const;
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Disables history recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

namespace detail {

using BackwardFn = std::function<void(std::span<const double> out_grad)>;

// Builds an op result. Raises NumericFault if `data` is not finite. The
// backward closure is attached only when recording is on and some input
// requires grad.
Tensor make_op(const char* name, Shape shape, Buffer data,
               std::vector<Tensor> inputs, BackwardFn backward);

// Grad buffer of `t` to accumulate into, or an empty span if `t` does not
// take gradients.
std::span<double> grad_sink(const Tensor& t);

void check_finite(const char* name, std::span<const double> data);

}  // namespace detail

}  // namespace lindistill
