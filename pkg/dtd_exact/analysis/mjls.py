'''
Jump-linear form of decentralized TD(0) and the lifted LTI system of its moments.

For a step size alpha the error xi^k = vec(Theta^k - Theta*) obeys
xi^{k+1} = H(z^k) xi^k + G(z^k), with one (H_i, G_i) pair per mode of the jump chain.
Stacked vectors of per-mode matrices use column-major vec for every block, in mode order.
'''

import numpy as np
from dataclasses import dataclass
from typing import Optional
from scipy.sparse.linalg import LinearOperator, aslinearoperator
from dtd_exact.exceptions import SizeGuardError, StructuralError
from dtd_exact.model.dynamics import all_mode_matrices

DEFAULT_SIZE_GUARD = 5000


@dataclass(frozen=True)
class ModeSystem:
    '''
    alpha (float): step size.
    h_modes (3d numpy array): n x n_xi x n_xi, H_i = alpha (I_M kron A_i) + W kron I_p.
    g_modes (2d numpy array): n x n_xi, G_i = alpha vec(B_i + A_i Theta*).
    theta_star_block (2d numpy array): p x M matrix [theta* ... theta*].
    '''

    alpha: float
    h_modes: np.ndarray
    g_modes: np.ndarray
    theta_star_block: np.ndarray

    @property
    def num_modes(self):
        return self.h_modes.shape[0]

    @property
    def state_dim(self):
        return self.h_modes.shape[1]

    @property
    def num_agents(self):
        return self.theta_star_block.shape[1]

    @property
    def num_features(self):
        return self.theta_star_block.shape[0]


def build_modes(mdp, net, chain, alpha, dynamics):
    '''
    Assembles H_i and G_i for every mode of the jump chain.

    Parameters
    ----------
    mdp (MultiAgentMdp): validated scenario MDP.
    net (CommNetwork): agent network.
    chain (JumpChain): jump chain of mdp.
    alpha (float): step size, alpha >= 0.
    dynamics (MeanDynamics): mean dynamics of mdp (supplies theta*).

    Returns
    -------
    modes (ModeSystem): per-mode matrices.
    '''

    if alpha < 0:
        raise ValueError(f'step size must be nonnegative, got {alpha}')
    M, p = mdp.num_agents, mdp.num_features
    if net.num_agents != M:
        raise StructuralError(f'network has {net.num_agents} agents but the MDP has {M} reward tables')
    if chain.num_modes != mdp.num_states ** 2:
        raise StructuralError('jump chain does not belong to this MDP')

    A, B = all_mode_matrices(mdp)
    n = A.shape[0]
    theta_star = dynamics.theta_star_block
    if theta_star.shape != (p, M):
        raise StructuralError(f'theta* block has shape {theta_star.shape}, expected {(p, M)}')

    local = np.einsum('mk,iab->imakb', np.eye(M), A).reshape(n, M * p, M * p)
    H = alpha * local + np.kron(net.weights, np.eye(p))[None]

    drive = B + A @ theta_star
    G = alpha * drive.transpose(0, 2, 1).reshape(n, M * p)

    for a in (H, G):
        a.setflags(write=False)

    return ModeSystem(alpha=float(alpha), h_modes=H, g_modes=G, theta_star_block=theta_star)


def stack_matrices(mats):
    '''[vec(X_1); ...; vec(X_n)] for an n x d x d array.'''
    return mats.transpose(0, 2, 1).reshape(-1)


def unstack_matrices(vector, n, d):
    '''Inverse of stack_matrices().'''
    return vector.reshape(n, d, d).transpose(0, 2, 1)


def propagate_first(modes, transition, q, p_k):
    '''
    One step of the first-moment recursion, q_j <- sum_i p_ij (H_i q_i + p_i G_i).

    Parameters
    ----------
    modes (ModeSystem): per-mode matrices.
    transition (2d numpy array): jump chain transition matrix P_z.
    q (2d numpy array): n x n_xi mode-conditioned means.
    p_k (1d numpy array): mode marginal; None drops the drive term.

    Returns
    -------
    q_next (2d numpy array): n x n_xi.
    '''

    hq = np.einsum('iab,ib->ia', modes.h_modes, q)
    if p_k is not None:
        hq = hq + p_k[:, None] * modes.g_modes
    return transition.T @ hq


def propagate_second(modes, transition, big_q, q, p_k):
    '''
    One step of the second-moment recursion,
    Q_j <- sum_i p_ij (H_i Q_i H_i^T + 2 sym(H_i q_i G_i^T) + p_i G_i G_i^T).

    q or p_k set to None drop the corresponding terms (used by the lifted operators).

    Returns
    -------
    big_q_next (3d numpy array): n x n_xi x n_xi.
    '''

    H, G = modes.h_modes, modes.g_modes
    X = H @ big_q @ H.transpose(0, 2, 1)
    if q is not None:
        cross = np.einsum('ia,ib->iab', np.einsum('iab,ib->ia', H, q), G)
        X = X + cross + cross.transpose(0, 2, 1)
    if p_k is not None:
        X = X + p_k[:, None, None] * np.einsum('ia,ib->iab', G, G)
    return np.einsum('ij,iab->jab', transition, X)


def cross_term(modes, transition, q):
    '''H21 applied to stacked first moments: sum_i p_ij vec(G_i q_i^T H_i^T + H_i q_i G_i^T).'''
    n, d = modes.num_modes, modes.state_dim
    H, G = modes.h_modes, modes.g_modes
    hq = np.einsum('iab,ib->ia', H, q.reshape(n, d))
    cross = np.einsum('ia,ib->iab', hq, G)
    X = np.einsum('ij,iab->jab', transition, cross + cross.transpose(0, 2, 1))
    return stack_matrices(X)


@dataclass(frozen=True)
class LtiMoments:
    '''
    Lifted moment system [q; Q] <- [[H11, 0], [H21, H22]] [q; Q] + [u_q; u_Q].

    h11, h21, h22 (2d numpy arrays): explicit blocks, None in operator form.
    c_delta (1d numpy array): functional returning (1/M) sum_i trace(Q_i).
    assembled_explicitly (bool): whether the explicit blocks exist.
    h11_op, h21_op, h22_op (LinearOperator): matrix-free application, always present.
    '''

    h11: Optional[np.ndarray]
    h21: Optional[np.ndarray]
    h22: Optional[np.ndarray]
    c_delta: np.ndarray
    assembled_explicitly: bool
    h11_op: LinearOperator
    h21_op: LinearOperator
    h22_op: LinearOperator
    size_guard: int = DEFAULT_SIZE_GUARD

    def require_explicit(self, what='this computation'):
        if not self.assembled_explicitly:
            raise SizeGuardError(f'{what} needs the explicit lifted matrices, but the second-moment '
                                 f'dimension {self.h22_op.shape[0]} exceeds the size guard '
                                 f'{self.size_guard}')

    def delta(self, q2):
        return float(self.c_delta @ q2)


def _explicit_blocks(modes, transition):
    n, d = modes.num_modes, modes.state_dim
    H, G = modes.h_modes, modes.g_modes

    def weighted(blocks):
        rows, cols = blocks.shape[1:]
        return np.einsum('ij,iab->jaib', transition, blocks).reshape(n * rows, n * cols)

    kron_hh = np.einsum('iab,icd->iacbd', H, H).reshape(n, d * d, d * d)
    s_modes = (np.einsum('iab,ic->iacb', H, G) + np.einsum('ia,icb->iacb', G, H)).reshape(n, d * d, d)
    return weighted(H), weighted(s_modes), weighted(kron_hh)


def _operator_blocks(modes, transition):
    n, d = modes.num_modes, modes.state_dim

    def h11(x):
        return propagate_first(modes, transition, np.ravel(x).reshape(n, d), None).ravel()

    def h22(x):
        big_q = unstack_matrices(np.ravel(x), n, d)
        return stack_matrices(propagate_second(modes, transition, big_q, None, None))

    def h21(x):
        return cross_term(modes, transition, np.ravel(x))

    dtype = np.dtype('float64')
    return (LinearOperator((n * d, n * d), matvec=h11, dtype=dtype),
            LinearOperator((n * d * d, n * d), matvec=h21, dtype=dtype),
            LinearOperator((n * d * d, n * d * d), matvec=h22, dtype=dtype))


def assemble_lti(modes, chain, size_guard=DEFAULT_SIZE_GUARD):
    '''
    Builds the lifted LTI blocks; explicit matrices only when n * n_xi^2 <= size_guard.

    Parameters
    ----------
    modes (ModeSystem): per-mode matrices.
    chain (JumpChain): jump chain (supplies P_z).
    size_guard (int): largest second-moment dimension assembled explicitly.

    Returns
    -------
    lti (LtiMoments): explicit or operator-form lifted system.
    '''

    n, d = modes.num_modes, modes.state_dim
    M = modes.num_agents
    transition = chain.transition
    c_delta = np.tile(np.eye(d).ravel(order='F'), n) / M

    if n * d * d <= size_guard:
        h11, h21, h22 = _explicit_blocks(modes, transition)
        return LtiMoments(h11=h11, h21=h21, h22=h22, c_delta=c_delta, assembled_explicitly=True,
                          h11_op=aslinearoperator(h11), h21_op=aslinearoperator(h21),
                          h22_op=aslinearoperator(h22), size_guard=size_guard)

    h11_op, h21_op, h22_op = _operator_blocks(modes, transition)
    return LtiMoments(h11=None, h21=None, h22=None, c_delta=c_delta, assembled_explicitly=False,
                      h11_op=h11_op, h21_op=h21_op, h22_op=h22_op, size_guard=size_guard)


def drive_terms(modes, chain, p_k):
    '''
    Drive vectors of the lifted system at mode marginal p_k.

    Parameters
    ----------
    modes (ModeSystem): per-mode matrices.
    chain (JumpChain): jump chain (supplies P_z).
    p_k (1d numpy array): probability vector over modes.

    Returns
    -------
    u_q (1d numpy array): block j is sum_i p_ij p_i G_i.
    u_big_q (1d numpy array): block j is sum_i p_ij p_i vec(G_i G_i^T).
    '''

    G = modes.g_modes
    weights = chain.transition * np.asarray(p_k)[:, None]
    u_q = np.einsum('ij,ia->ja', weights, G).ravel()
    u_big_q = np.einsum('ij,ia,ib->jba', weights, G, G).reshape(-1)
    return u_q, u_big_q
