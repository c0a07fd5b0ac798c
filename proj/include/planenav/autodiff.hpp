#pragma once

#include <functional>
#include <vector>

namespace planenav::ad {

// Reverse-mode tape over flat double buffers. Ops append nodes whose backward
// closures accumulate into parent gradients; backward() walks the tape in
// reverse creation order, which is a valid topological order because ops can
// only reference earlier ids.
class Tape {
  public:
    int leaf(std::vector<double> val, bool needs_grad);

    const std::vector<double>& val(int id) const { return nodes_[id].val; }
    std::vector<double>& grad(int id);
    std::size_t size(int id) const { return nodes_[id].val.size(); }

    // 3D convolution, kernel 3x3x3, zero padding 1, square stride.
    // x: [ci][d][h][w], w: [co][ci][3][3][3], b: [co].
    int conv3d(int x, int w, int b, int ci, int co, int d, int h, int wd, int stride);

    // 1x1x1 channel projection sampled at the same strided centers.
    int proj3d(int x, int w, int b, int ci, int co, int d, int h, int wd, int stride);

    // Identity skip for stride-2 stages: x[c][2i][2j][2k].
    int subsample2(int x, int c, int d, int h, int wd);

    int add(int a, int b);
    int relu(int x);
    int sigmoid(int x);
    int tanh_op(int x);
    int mul(int a, int b);                    // elementwise
    int slice(int x, int offset, int len);    // view copy with scatter-add backward
    int linear(int x, int w, int b, int in, int out);  // w: [out][in]
    int softsign(int x);                      // x / (1 + |x|)
    int softplus_shift(int x, double shift);  // log(1 + e^x) + shift

    // Scalar loss pieces. z and the weights are constants: no gradient flows
    // into them, matching the advantage-as-constant convention.
    // -coef * sum_a log N(z_a; mu_a, sigma_a)
    int gaussian_nll(int mu, int sigma, std::vector<double> z, double coef);
    // -eta * sum_a (0.5*ln(2*pi*sigma_a^2) + 0.5)
    int neg_entropy(int sigma, double eta);
    // coef * 0.5 * (target - g)^2, g a length-1 node
    int squared_value_error(int g, double target, double coef);
    int add_scalars(const std::vector<int>& ids);

    // Seeds d(loss)/d(loss)=1 and propagates to every contributing node;
    // needs_grad on a leaf marks which gradients callers intend to read.
    void backward(int loss_id);

    static int out_size(int n, int stride) { return (n - 1) / stride + 1; }

  private:
    struct Node {
        std::vector<double> val;
        std::vector<double> grad;
        std::function<void(Tape&)> back;
        bool needs_grad = true;
    };
    std::vector<Node> nodes_;

    int push(std::vector<double> val, std::function<void(Tape&)> back);
};

// Numerically stable softplus.
double softplus(double x);

}  // namespace planenav::ad
