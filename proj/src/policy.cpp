#include "dell/policy.hpp"

#include "dell/binary_io.hpp"
#include "dell/errors.hpp"
#include "dell/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dell {

namespace {

constexpr std::uint32_t kPolicyVersion = 1;
constexpr std::size_t kPolicyHeaderBytes = 4 + 4 * 4;
constexpr float kHalfMax = 65504.0f;

std::uint16_t half_bits(float v) {
  if (!std::isfinite(v) || std::abs(v) > kHalfMax)
    throw OverflowError("policy weight " + std::to_string(v) + " exceeds the half-precision range");
  return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(v));
}

float from_half_bits(std::uint16_t bits) {
  return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
}

/// Sum over columns of the value of the argmax action.
double total_value(const Matrix& logits, const Matrix& values) {
  double total = 0.0;
  for (Eigen::Index t = 0; t < logits.cols(); ++t) {
    Eigen::Index a = 0;
    logits.col(t).maxCoeff(&a);
    total += values(a, t);
  }
  return total;
}

}  // namespace

LinearPolicy zero_policy(int action_count, int dim) {
  return {Matrix::Zero(action_count, dim), Vector::Zero(action_count)};
}

LinearPolicy random_policy(std::uint64_t seed, float stddev, int action_count, int dim) {
  Rng rng(derive_seed(seed, "random-policy"));
  LinearPolicy p;
  p.weights = normal_matrix<Scalar>(action_count, dim, rng, stddev);
  p.bias = normal_matrix<Scalar>(action_count, 1, rng, stddev);
  return p;
}

int act(const LinearPolicy& policy, const Embedding& embedding) {
  if (embedding.size() != policy.dim()) throw ShapeError("embedding dimension does not match the policy");
  Eigen::Index a = 0;
  (policy.weights * embedding + policy.bias).maxCoeff(&a);
  return static_cast<int>(a);
}

std::vector<int> act(const LinearPolicy& policy, const EmbeddingBatch& embeddings) {
  if (embeddings.rows() != policy.dim()) throw ShapeError("embedding dimension does not match the policy");
  const Matrix logits = (policy.weights * embeddings).colwise() + policy.bias;
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index t = 0; t < logits.cols(); ++t) {
    Eigen::Index a = 0;
    logits.col(t).maxCoeff(&a);
    out[static_cast<std::size_t>(t)] = static_cast<int>(a);
  }
  return out;
}

BatchPolicy as_batch_policy(const LinearPolicy& policy, const EncoderModel& encoder) {
  return [&policy, &encoder](const FrameBatch& frames) { return act(policy, encode(encoder, frames)); };
}

RlResult cem_optimize(const EmbeddingBatch& embeddings, const Matrix& values, int episodes, const CemOptions& o) {
  if (o.budget < 1) throw ValidationError("CEM budget must be at least 1");
  if (o.population < 2 || !(o.elite_fraction > 0.0 && o.elite_fraction <= 1.0))
    throw ValidationError("bad CEM population settings");
  if (values.cols() != embeddings.cols()) throw ShapeError("one action-value column per embedding");
  const auto actions = values.rows();
  const auto dim = embeddings.rows();
  const int n_elite = std::max(1, static_cast<int>(std::lround(o.elite_fraction * o.population)));

  // The search runs in whitened principal coordinates of the scenario embeddings, z = S (e - m),
  // keeping components above the noise floor. Parameters are [W' column-major | b'].
  const Vector center = embeddings.rowwise().mean();
  const Matrix centered = embeddings.colwise() - center;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig((centered * centered.transpose()).cast<double>() /
                                                     static_cast<double>(std::max<Eigen::Index>(1, centered.cols())));
  // The median eigenvalue estimates the isotropic noise floor; only directions clearly above it
  // carry structure worth searching.
  const Eigen::VectorXd lambda = eig.eigenvalues().reverse();
  const double top = std::max(lambda(0), 0.0);
  std::vector<double> sorted(lambda.data(), lambda.data() + lambda.size());
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double cut = std::max(o.variance_floor * top, o.noise_multiple * std::max(sorted[sorted.size() / 2], 0.0));
  Eigen::Index k = 0;
  while (k < lambda.size() && k < o.max_components && lambda(k) > cut) ++k;
  k = std::max<Eigen::Index>(k, 1);
  Matrix whiten(k, dim);  // S
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index src = dim - 1 - i;  // eigenvalues ascend
    whiten.row(i) = (eig.eigenvectors().col(src) / std::sqrt(eig.eigenvalues()(src))).transpose().cast<Scalar>();
  }
  const Eigen::Index fdim = k;
  const Eigen::Index n_params = actions * (fdim + 1);
  Matrix features(fdim + 1, embeddings.cols());
  features.topRows(fdim) = whiten * centered;
  features.row(fdim).setOnes();

  Rng rng(derive_seed(o.seed, "cem"));
  std::normal_distribution<Scalar> normal(0.0f, 1.0f);
  Vector mean = Vector::Zero(n_params);
  Vector stddev = Vector::Constant(n_params, o.initial_std);

  auto fitness = [&](const Vector& theta) {
    const Eigen::Map<const Matrix> w(theta.data(), actions, fdim + 1);
    return total_value(w * features, values) / episodes;
  };

  std::vector<Vector> elites;
  std::vector<double> elite_fit;
  RlResult result;
  result.components = static_cast<int>(k);
  for (int it = 0; it < o.budget; ++it) {
    std::vector<Vector> pop = elites;
    std::vector<double> fit = elite_fit;
    const Scalar extra = o.extra_std * (1.0f - static_cast<Scalar>(it) / static_cast<Scalar>(o.budget));
    for (int i = 0; i < o.population; ++i) {
      Vector theta(n_params);
      for (Eigen::Index j = 0; j < n_params; ++j)
        theta(j) = mean(j) + std::sqrt(stddev(j) * stddev(j) + extra * extra) * normal(rng);
      if (!theta.allFinite()) throw DivergenceError("CEM produced non-finite parameters");
      fit.push_back(fitness(theta));
      pop.push_back(std::move(theta));
    }
    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Stable so that, on ties, carried-over elites win and the outcome is deterministic.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });

    elites.clear();
    elite_fit.clear();
    for (int i = 0; i < n_elite; ++i) {
      elites.push_back(pop[order[static_cast<std::size_t>(i)]]);
      elite_fit.push_back(fit[order[static_cast<std::size_t>(i)]]);
    }
    Vector new_mean = Vector::Zero(n_params);
    for (const auto& e : elites) new_mean += e;
    new_mean /= static_cast<Scalar>(n_elite);
    Vector var = Vector::Zero(n_params);
    for (const auto& e : elites) var += (e - new_mean).cwiseAbs2();
    mean = new_mean;
    stddev = (var / static_cast<Scalar>(n_elite)).cwiseSqrt();

    const double elite_mean = std::accumulate(elite_fit.begin(), elite_fit.end(), 0.0) / n_elite;
    if (!result.elite_means.empty() && elite_mean < result.elite_means.back())
      throw DivergenceError("CEM elite mean decreased");
    result.elite_means.push_back(elite_mean);
    result.iterations = it + 1;

    const auto [lo, hi] = std::minmax_element(fit.begin(), fit.end());
    if (*hi == *lo) {
      result.plateaued = true;  // flat fitness landscape, nothing left to learn
      break;
    }
    const int w = o.plateau_window;
    if (static_cast<int>(result.elite_means.size()) > w) {
      const double before = result.elite_means[result.elite_means.size() - 1 - static_cast<std::size_t>(w)];
      if (elite_mean - before <= o.plateau_tolerance * std::max(std::abs(before), 1e-12)) {
        result.plateaued = true;
        break;
      }
    }
  }
  // Back to embedding coordinates: W = W' S, b = b' - W m.
  const Eigen::Map<const Matrix> best(elites.front().data(), actions, fdim + 1);
  result.policy.weights = best.leftCols(fdim) * whiten;
  result.policy.bias = best.col(fdim) - result.policy.weights * center;
  result.best_fitness = elite_fit.front();
  return result;
}

RlResult rl_procedure(const SyntheticGame& game, const EncoderModel& encoder, const CemOptions& o) {
  if (!encoder.frozen) throw ValidationError("encoder must be frozen");
  if (o.scenario_episodes < 1) throw ValidationError("need at least one scenario episode");
  const int T = game.episode_length;
  EmbeddingBatch emb(encoder.latent_dim(), static_cast<Eigen::Index>(o.scenario_episodes) * T);
  Matrix values(game.action_count, emb.cols());
  for (int e = 0; e < o.scenario_episodes; ++e) {
    const auto s = sample_episode(game, episode_seed(game, derive_seed(o.seed, "scenario"), e));
    emb.middleCols(static_cast<Eigen::Index>(e) * T, T) = encode(encoder, s.frames);
    values.middleCols(static_cast<Eigen::Index>(e) * T, T) = action_values(game, s.contexts);
  }
  RlResult r = cem_optimize(emb, values, o.scenario_episodes, o);
  r.collected = std::move(emb);
  return r;
}

double mean_return(const SyntheticGame& game, const LinearPolicy& policy, const EncoderModel& encoder, int episodes,
                   std::uint64_t seed) {
  const auto returns = episode_returns(game, as_batch_policy(policy, encoder), episodes, seed);
  return std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
}

std::size_t policy_file_size(int action_count, int dim) {
  return kPolicyHeaderBytes + 2 * static_cast<std::size_t>(action_count) * static_cast<std::size_t>(dim + 1);
}

LinearPolicy quantize(const LinearPolicy& policy) {
  LinearPolicy q = policy;
  for (Eigen::Index i = 0; i < q.weights.size(); ++i) q.weights.data()[i] = from_half_bits(half_bits(q.weights.data()[i]));
  for (Eigen::Index i = 0; i < q.bias.size(); ++i) q.bias(i) = from_half_bits(half_bits(q.bias(i)));
  return q;
}

PolicyRecord quantize_store(const LinearPolicy& policy, int class_id, const std::filesystem::path& path) {
  if (class_id < 0) throw ValidationError("class id must be non-negative");
  if (policy.bias.size() != policy.weights.rows()) throw ShapeError("policy bias size mismatch");
  ByteWriter w;
  w.magic("DLPL");
  w.u32(kPolicyVersion);
  w.u32(static_cast<std::uint32_t>(class_id));
  w.u32(static_cast<std::uint32_t>(policy.action_count()));
  w.u32(static_cast<std::uint32_t>(policy.dim()));
  for (Eigen::Index i = 0; i < policy.weights.rows(); ++i)
    for (Eigen::Index j = 0; j < policy.weights.cols(); ++j) w.u16(half_bits(policy.weights(i, j)));
  for (Eigen::Index i = 0; i < policy.bias.size(); ++i) w.u16(half_bits(policy.bias(i)));
  if (static_cast<double>(w.size()) >= kPolicyByteLimit) throw ValidationError("policy file exceeds 1.5 MB");
  write_file(path, w.bytes());
  return {class_id, path, w.size()};
}

LinearPolicy load_policy(const std::filesystem::path& path, int* class_id) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.expect_magic("DLPL");
  if (r.u32() != kPolicyVersion) throw ParseError("policy file version mismatch");
  const auto id = r.u32();
  const auto actions = static_cast<Eigen::Index>(r.u32());
  const auto dim = static_cast<Eigen::Index>(r.u32());
  LinearPolicy p{Matrix(actions, dim), Vector(actions)};
  for (Eigen::Index i = 0; i < actions; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) p.weights(i, j) = from_half_bits(r.u16());
  for (Eigen::Index i = 0; i < actions; ++i) p.bias(i) = from_half_bits(r.u16());
  if (!r.at_end()) throw ParseError("trailing bytes in policy file");
  if (class_id) *class_id = static_cast<int>(id);
  return p;
}

PolicyRegistry::PolicyRegistry(std::filesystem::path root) : dir_(std::move(root) / "policies") {}

PolicyRecord PolicyRegistry::append(const LinearPolicy& policy) {
  const int id = size();
  auto rec = quantize_store(policy, id, dir_ / (std::to_string(id) + ".pol"));
  records_.push_back(rec);
  return rec;
}

LinearPolicy PolicyRegistry::load(int class_id) const {
  if (class_id < 0 || class_id >= size()) throw ValidationError("no policy for class " + std::to_string(class_id));
  int stored = -1;
  auto p = load_policy(records_[static_cast<std::size_t>(class_id)].path, &stored);
  if (stored != class_id) throw ValidationError("policy file tagged with a different class id");
  return p;
}

std::size_t PolicyRegistry::total_bytes() const {
  std::size_t n = 0;
  for (const auto& r : records_) n += r.bytes;
  return n;
}

}  // namespace dell
