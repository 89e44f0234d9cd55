"""
End to end: conjugating a nearly included algebra into its container.

A copy of M_2 + M_2 is tilted by a unitary of strength 1e-5 away from the
block diagonal of M_4.  The pipeline estimates gamma, checks it against
1/digamma, corrects the compression to a homomorphism, builds S and its
unitary part, and writes a certificate that ``verify`` replays.  A second
scenario with strength 0.2 fails the threshold.
"""

import tempfile

from nearincl import ScenarioParams, generate_scenario, run_report, verify_certificate

out = tempfile.mkdtemp(prefix="nearincl-demo-")

for strength in (1e-5, 0.2):
    sc = generate_scenario(ScenarioParams(block_sizes=(2, 2), strength=strength, unitary=True), seed=7)
    cert, code, paths = run_report(sc, out)
    print(f"\nscenario {sc.scenario_id}")
    print(f"  gamma in [{sc.gamma_bracket.lower:.3e}, {sc.gamma_bracket.upper:.3e}], ||P|| <= {cert.p_norm_upper}")
    print(f"  digamma = {cert.digamma_value:.0f}, threshold 1/digamma = {1 / cert.digamma_value:.3e}")
    print(f"  outcome {cert.outcome} (exit code {code})")
    if cert.similarity is not None:
        print(f"  ||S - I|| = {cert.s_minus_identity:.3e} <= digamma * gamma = {cert.digamma_value * cert.gamma_upper:.3e}")
        print(f"  S A S^-1 residual in N: {cert.conjugation_residual:.1e}")
    if cert.unitary is not None:
        uni = cert.unitary
        print(f"  ||U - I|| = {uni['u_minus_identity']:.3e} <= {uni['corollary_bound']:.3e}, "
              f"U*U - I {uni['unitarity_residual']:.1e}")
    rep = verify_certificate(paths["certificate"])
    print(f"  replay matches: {rep.matches} ({paths['certificate']})")
