"""dsagg: simulation and validation of aggregated doubly stochastic panels.

Elementary processes Z^i_t(y^i, eps^i) are driven by an i.i.d. random
environment Y = (y^1, y^2, ...) and innovation rows eps^i that interact
across the panel index through a covariance kernel chi(i-j).  The package
builds the standard model zoo (linear, Volterra with ordered expansions,
bilinear, LARCH, ARCH, GARCH(1,1), Lipschitz Bernoulli shifts), checks the
second-order existence and moment conditions that gate every experiment, and
validates two asymptotic statements empirically: the normalized partial sum
X^N_t = N^(-1/2) sum_i Z^i_t is asymptotically Gaussian for a fixed
environment draw, and its covariance quadratic form Gamma^N converges to an
explicit limit built from chaos masses and Cesaro sums of chi powers.
"""

__version__ = "0.1.0"
