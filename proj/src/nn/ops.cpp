#include <snake/nn/ops.hpp>
#include <snake/nn/functional.hpp>
#include <snake/nn/kernels.hpp>
#include <snake/error.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace snake::nn::ops
{
	namespace
	{
		Tape& tape_of(Var v)
		{
			if (v.tape == nullptr)
				throw Error("variable is not attached to a tape");
			return const_cast<Tape&>(*v.tape);
		}
		void require_matrix(const Tensor &t, const char *what)
		{
			if (t.rank() != 2)
				throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_to_string(t.shape()));
		}
	}

	Var linear(Var x, Var w, Var b)
	{
		Tape &tape = tape_of(x);
		const Tensor &X = tape.value(x);
		const Tensor &W = tape.value(w);
		const Tensor &B = tape.value(b);
		require_matrix(X, "linear input");
		require_matrix(W, "linear weights");
		const std::size_t m = X.rows(), k = X.cols(), n = W.rows();
		if (W.cols() != k || B.size() != n)
			throw DimensionError("linear: input " + shape_to_string(X.shape()) + ", weights " + shape_to_string(W.shape()) + ", bias "
					+ shape_to_string(B.shape()));

		Tensor Y = Tensor::matrix(m, n);
		const auto &kt = kernels::active();
		for (std::size_t j = 0; j < n; j++)
		{
			const double *wj = W.ptr() + j * k;
			for (std::size_t i = 0; i < m; i++)
				Y[i * n + j] = kt.dot(X.ptr() + i * k, wj, k) + B[j];
		}

		return tape.record(std::move(Y), { x, w, b }, [x = x.id, w = w.id, b = b.id, m, n, k](Tape &t, std::size_t self)
		{
			const Tensor &dY = t.grad(self);
			const auto &kt = kernels::active();
			if (t.requires_grad(x))
			{
				const Tensor &W = t.value(w);
				Tensor &dX = t.grad(x);
				for (std::size_t i = 0; i < m; i++)
					for (std::size_t j = 0; j < n; j++)
						kt.axpy(dY[i * n + j], W.ptr() + j * k, dX.ptr() + i * k, k);
			}
			if (t.requires_grad(w))
			{
				const Tensor &X = t.value(x);
				Tensor &dW = t.grad(w);
				for (std::size_t j = 0; j < n; j++)
					for (std::size_t i = 0; i < m; i++)
						kt.axpy(dY[i * n + j], X.ptr() + i * k, dW.ptr() + j * k, k);
			}
			if (t.requires_grad(b))
			{
				Tensor &dB = t.grad(b);
				for (std::size_t i = 0; i < m; i++)
					kt.add(dY.ptr() + i * n, dB.ptr(), n);
			}
		});
	}

	Var add(Var a, Var b)
	{
		Tape &tape = tape_of(a);
		const Tensor &A = tape.value(a);
		const Tensor &B = tape.value(b);
		if (A.size() != B.size())
			throw DimensionError("add: " + shape_to_string(A.shape()) + " vs " + shape_to_string(B.shape()));
		Tensor Y = A;
		kernels::add(B.data(), Y.data());
		return tape.record(std::move(Y), { a, b }, [a = a.id, b = b.id](Tape &t, std::size_t self)
		{
			const Tensor &dY = t.grad(self);
			if (t.requires_grad(a))
				kernels::add(dY.data(), t.grad(a).data());
			if (t.requires_grad(b))
				kernels::add(dY.data(), t.grad(b).data());
		});
	}

	Var scale(Var x, double factor)
	{
		Tape &tape = tape_of(x);
		Tensor Y = tape.value(x);
		kernels::scale(factor, Y.data());
		return tape.record(std::move(Y), { x }, [x = x.id, factor](Tape &t, std::size_t self)
		{
			kernels::axpy(factor, t.grad(self).data(), t.grad(x).data());
		});
	}

	Var relu(Var x)
	{
		Tape &tape = tape_of(x);
		Tensor Y = tape.value(x);
		for (double &v : Y.data())
			v = std::max(v, 0.0);
		return tape.record(std::move(Y), { x }, [x = x.id](Tape &t, std::size_t self)
		{
			const Tensor &X = t.value(x);
			const Tensor &dY = t.grad(self);
			Tensor &dX = t.grad(x);
			for (std::size_t i = 0; i < X.size(); i++)
				if (X[i] > 0.0)
					dX[i] += dY[i];
		});
	}

	Var dropout(Var x, double rate, CounterStream &stream, bool train)
	{
		if (rate < 0.0 || rate >= 1.0)
			throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
		if (!train || rate == 0.0)
			return x;
		Tape &tape = tape_of(x);
		const Tensor &X = tape.value(x);
		const double keep_scale = 1.0 / (1.0 - rate);
		auto mask = std::make_shared<std::vector<double>>(X.size());
		Tensor Y = X;
		for (std::size_t i = 0; i < X.size(); i++)
		{
			(*mask)[i] = stream.next_uniform() < rate ? 0.0 : keep_scale;
			Y[i] *= (*mask)[i];
		}
		return tape.record(std::move(Y), { x }, [x = x.id, mask](Tape &t, std::size_t self)
		{
			const Tensor &dY = t.grad(self);
			Tensor &dX = t.grad(x);
			for (std::size_t i = 0; i < dY.size(); i++)
				dX[i] += dY[i] * (*mask)[i];
		});
	}

	Var layer_norm(Var x, Var gamma, Var beta, double eps)
	{
		Tape &tape = tape_of(x);
		const Tensor &X = tape.value(x);
		const Tensor &G = tape.value(gamma);
		const Tensor &Bt = tape.value(beta);
		require_matrix(X, "layer_norm input");
		const std::size_t rows = X.rows(), d = X.cols();
		if (G.size() != d || Bt.size() != d)
			throw DimensionError("layer_norm: width " + std::to_string(d) + " vs gain " + shape_to_string(G.shape()));

		auto normalized = std::make_shared<Tensor>(Tensor::matrix(rows, d));
		auto inv_std = std::make_shared<std::vector<double>>(rows);
		Tensor Y = Tensor::matrix(rows, d);
		for (std::size_t r = 0; r < rows; r++)
		{
			const auto xr = X.row(r);
			double mean = 0.0;
			for (double v : xr)
				mean += v;
			mean /= static_cast<double>(d);
			double var = 0.0;
			for (double v : xr)
				var += (v - mean) * (v - mean);
			var /= static_cast<double>(d);
			const double is = 1.0 / std::sqrt(var + eps);
			(*inv_std)[r] = is;
			for (std::size_t c = 0; c < d; c++)
			{
				const double xh = (xr[c] - mean) * is;
				normalized->at(r, c) = xh;
				Y.at(r, c) = G[c] * xh + Bt[c];
			}
		}
		return tape.record(std::move(Y), { x, gamma, beta }, [x = x.id, g = gamma.id, b = beta.id, normalized, inv_std, rows, d](Tape &t,
				std::size_t self)
		{
			const Tensor &dY = t.grad(self);
			const Tensor &G = t.value(g);
			if (t.requires_grad(g) || t.requires_grad(b))
			{
				for (std::size_t r = 0; r < rows; r++)
					for (std::size_t c = 0; c < d; c++)
					{
						if (t.requires_grad(g))
							t.grad(g)[c] += dY.at(r, c) * normalized->at(r, c);
						if (t.requires_grad(b))
							t.grad(b)[c] += dY.at(r, c);
					}
			}
			if (t.requires_grad(x))
			{
				Tensor &dX = t.grad(x);
				std::vector<double> dxh(d);
				for (std::size_t r = 0; r < rows; r++)
				{
					double mean_dxh = 0.0, mean_dxh_xh = 0.0;
					for (std::size_t c = 0; c < d; c++)
					{
						dxh[c] = dY.at(r, c) * G[c];
						mean_dxh += dxh[c];
						mean_dxh_xh += dxh[c] * normalized->at(r, c);
					}
					mean_dxh /= static_cast<double>(d);
					mean_dxh_xh /= static_cast<double>(d);
					for (std::size_t c = 0; c < d; c++)
						dX.at(r, c) += (*inv_std)[r] * (dxh[c] - mean_dxh - normalized->at(r, c) * mean_dxh_xh);
				}
			}
		});
	}

	Var reshape(Var x, std::vector<std::size_t> shape)
	{
		Tape &tape = tape_of(x);
		Tensor Y = tape.value(x).reshaped(std::move(shape));
		return tape.record(std::move(Y), { x }, [x = x.id](Tape &t, std::size_t self)
		{
			kernels::add(t.grad(self).data(), t.grad(x).data());
		});
	}

	Var softmax(Var x)
	{
		Tape &tape = tape_of(x);
		const Tensor &X = tape.value(x);
		require_matrix(X, "softmax input");
		Tensor Y = Tensor::matrix(X.rows(), X.cols());
		for (std::size_t r = 0; r < X.rows(); r++)
		{
			const std::vector<double> p = nn::softmax(X.row(r));
			std::copy(p.begin(), p.end(), Y.row(r).begin());
		}
		return tape.record(std::move(Y), { x }, [x = x.id](Tape &t, std::size_t self)
		{
			const Tensor &P = t.value(self);
			const Tensor &dY = t.grad(self);
			Tensor &dX = t.grad(x);
			for (std::size_t r = 0; r < P.rows(); r++)
			{
				const double s = kernels::dot(dY.row(r), P.row(r));
				for (std::size_t c = 0; c < P.cols(); c++)
					dX.at(r, c) += P.at(r, c) * (dY.at(r, c) - s);
			}
		});
	}

	Var attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t heads, std::vector<Tensor> *probs_out)
	{
		Tape &tape = tape_of(q);
		const Tensor &Q = tape.value(q);
		const Tensor &K = tape.value(k);
		const Tensor &V = tape.value(v);
		require_matrix(Q, "attention query");
		const std::size_t rows = Q.rows(), d = Q.cols();
		if (!Q.same_shape(K) || !Q.same_shape(V))
			throw DimensionError("attention: q/k/v shapes differ");
		if (seq_len == 0 || rows % seq_len != 0 || heads == 0 || d % heads != 0)
			throw DimensionError("attention: " + std::to_string(rows) + " rows, width " + std::to_string(d) + " cannot split into sequences of "
					+ std::to_string(seq_len) + " with " + std::to_string(heads) + " heads");
		const std::size_t batch = rows / seq_len, dh = d / heads;
		const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
		const auto &kt = kernels::active();

		// probs laid out [batch][head][query][key]
		auto probs = std::make_shared<std::vector<double>>(batch * heads * seq_len * seq_len);
		Tensor O = Tensor::matrix(rows, d);
		std::vector<double> scores(seq_len);
		for (std::size_t b = 0; b < batch; b++)
			for (std::size_t h = 0; h < heads; h++)
			{
				double *P = probs->data() + ((b * heads + h) * seq_len) * seq_len;
				for (std::size_t i = 0; i < seq_len; i++)
				{
					const double *qi = Q.ptr() + (b * seq_len + i) * d + h * dh;
					for (std::size_t j = 0; j < seq_len; j++)
						scores[j] = kt.dot(qi, K.ptr() + (b * seq_len + j) * d + h * dh, dh) * inv_sqrt;
					const std::vector<double> p = nn::softmax(scores);
					std::copy(p.begin(), p.end(), P + i * seq_len);
					double *oi = O.ptr() + (b * seq_len + i) * d + h * dh;
					for (std::size_t j = 0; j < seq_len; j++)
						kt.axpy(p[j], V.ptr() + (b * seq_len + j) * d + h * dh, oi, dh);
				}
			}
		if (probs_out != nullptr)
		{
			probs_out->clear();
			for (std::size_t bh = 0; bh < batch * heads; bh++)
				probs_out->push_back(Tensor( { seq_len, seq_len },
						std::vector<double>(probs->begin() + static_cast<std::ptrdiff_t>(bh * seq_len * seq_len),
								probs->begin() + static_cast<std::ptrdiff_t>((bh + 1) * seq_len * seq_len))));
		}

		return tape.record(std::move(O), { q, k, v }, [q = q.id, k = k.id, v = v.id, probs, batch, heads, seq_len, d, dh, inv_sqrt](Tape &t,
				std::size_t self)
		{
			const auto &kt = kernels::active();
			const Tensor &Q = t.value(q);
			const Tensor &K = t.value(k);
			const Tensor &V = t.value(v);
			const Tensor &dO = t.grad(self);
			const bool need_q = t.requires_grad(q), need_k = t.requires_grad(k), need_v = t.requires_grad(v);
			double *dQ = need_q ? t.grad(q).ptr() : nullptr;
			double *dK = need_k ? t.grad(k).ptr() : nullptr;
			double *dV = need_v ? t.grad(v).ptr() : nullptr;
			std::vector<double> dP(seq_len);
			for (std::size_t b = 0; b < batch; b++)
				for (std::size_t h = 0; h < heads; h++)
				{
					const double *P = probs->data() + ((b * heads + h) * seq_len) * seq_len;
					for (std::size_t i = 0; i < seq_len; i++)
					{
						const std::size_t ri = (b * seq_len + i) * d + h * dh;
						const double *doi = dO.ptr() + ri;
						const double *pi = P + i * seq_len;
						double row_dot = 0.0;
						for (std::size_t j = 0; j < seq_len; j++)
						{
							const std::size_t rj = (b * seq_len + j) * d + h * dh;
							dP[j] = kt.dot(doi, V.ptr() + rj, dh);
							row_dot += dP[j] * pi[j];
							if (need_v)
								kt.axpy(pi[j], doi, dV + rj, dh);
						}
						for (std::size_t j = 0; j < seq_len; j++)
						{
							const double ds = pi[j] * (dP[j] - row_dot) * inv_sqrt;
							if (ds == 0.0)
								continue;
							const std::size_t rj = (b * seq_len + j) * d + h * dh;
							if (need_q)
								kt.axpy(ds, K.ptr() + rj, dQ + ri, dh);
							if (need_k)
								kt.axpy(ds, Q.ptr() + ri, dK + rj, dh);
						}
					}
				}
		});
	}

	Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels)
	{
		Tape &tape = tape_of(logits);
		const Tensor &L = tape.value(logits);
		require_matrix(L, "cross-entropy logits");
		const std::size_t m = L.rows(), c = L.cols();
		if (labels.size() != m)
			throw DimensionError("cross-entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) + " rows");
		auto probs = std::make_shared<Tensor>(Tensor::matrix(m, c));
		double total = 0.0;
		for (std::size_t i = 0; i < m; i++)
		{
			if (labels[i] >= c)
				throw DataError("label index " + std::to_string(labels[i]) + " out of range for " + std::to_string(c) + " classes");
			const std::vector<double> p = nn::softmax(L.row(i));
			std::copy(p.begin(), p.end(), probs->row(i).begin());
			total += nn::cross_entropy(p, labels[i]);
		}
		std::vector<std::size_t> y(labels.begin(), labels.end());
		return tape.record(Tensor( { 1 }, total / static_cast<double>(m)), { logits }, [logits = logits.id, probs, y = std::move(y), m, c](Tape &t,
				std::size_t self)
		{
			const double g = t.grad(self)[0] / static_cast<double>(m);
			Tensor &dL = t.grad(logits);
			for (std::size_t i = 0; i < m; i++)
			{
				// the probability floor is flat, so a clamped sample contributes nothing
				if (probs->at(i, y[i]) < probability_floor)
					continue;
				for (std::size_t j = 0; j < c; j++)
					dL.at(i, j) += g * (probs->at(i, j) - (j == y[i] ? 1.0 : 0.0));
			}
		});
	}

	Var mix(const std::vector<Var> &inputs, Var weights)
	{
		if (inputs.empty())
			throw DimensionError("mix: no inputs");
		Tape &tape = tape_of(weights);
		const Tensor &Wt = tape.value(weights);
		require_matrix(Wt, "mix weights");
		const Tensor &first = tape.value(inputs.front());
		const std::size_t m = inputs.size(), rows = first.rows(), d = first.cols();
		if (Wt.rows() != rows || Wt.cols() != m)
			throw DimensionError("mix: weights " + shape_to_string(Wt.shape()) + " for " + std::to_string(m) + " inputs of " + std::to_string(rows)
					+ " rows");
		Tensor Y = Tensor::matrix(rows, d);
		for (std::size_t j = 0; j < m; j++)
		{
			const Tensor &X = tape.value(inputs[j]);
			if (!X.same_shape(first))
				throw DimensionError("mix: input shapes differ");
			for (std::size_t r = 0; r < rows; r++)
				kernels::axpy(Wt.at(r, j), X.row(r), Y.row(r));
		}
		std::vector<Var> all = inputs;
		all.push_back(weights);
		std::vector<std::size_t> ids;
		for (const Var &v : inputs)
			ids.push_back(v.id);
		return tape.record(std::move(Y), all, [ids = std::move(ids), w = weights.id, rows](Tape &t, std::size_t self)
		{
			const Tensor &dY = t.grad(self);
			const Tensor &Wt = t.value(w);
			for (std::size_t j = 0; j < ids.size(); j++)
			{
				if (t.requires_grad(ids[j]))
				{
					Tensor &dX = t.grad(ids[j]);
					for (std::size_t r = 0; r < rows; r++)
						kernels::axpy(Wt.at(r, j), dY.row(r), dX.row(r));
				}
				if (t.requires_grad(w))
				{
					const Tensor &X = t.value(ids[j]);
					Tensor &dW = t.grad(w);
					for (std::size_t r = 0; r < rows; r++)
						dW.at(r, j) += kernels::dot(dY.row(r), X.row(r));
				}
			}
		});
	}

	Var weighted_sum(const std::vector<Var> &terms, std::span<const double> factors)
	{
		if (terms.empty() || terms.size() != factors.size())
			throw DimensionError("weighted_sum: " + std::to_string(terms.size()) + " terms, " + std::to_string(factors.size()) + " factors");
		Tape &tape = tape_of(terms.front());
		double total = 0.0;
		for (std::size_t k = 0; k < terms.size(); k++)
		{
			const Tensor &T = tape.value(terms[k]);
			if (T.size() != 1)
				throw DimensionError("weighted_sum: terms must be scalars");
			total += factors[k] * T[0];
		}
		std::vector<std::size_t> ids;
		for (const Var &v : terms)
			ids.push_back(v.id);
		std::vector<double> f(factors.begin(), factors.end());
		return tape.record(Tensor( { 1 }, total), terms, [ids = std::move(ids), f = std::move(f)](Tape &t, std::size_t self)
		{
			const double g = t.grad(self)[0];
			for (std::size_t k = 0; k < ids.size(); k++)
				if (t.requires_grad(ids[k]))
					t.grad(ids[k])[0] += f[k] * g;
		});
	}
}
