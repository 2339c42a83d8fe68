# # Renormalized distance and the Efron-Stein proxy
#
# Red edges of weight K t join all points of one mesoscopic box.  D^t never
# exceeds the chemical distance, and resampling one box at a time gives a
# variance proxy.

from percolab.chemdist import chemical_distance
from percolab.clusters import label_clusters, nearest_giant_point
from percolab.lattice import LatticeBox, RenormScheme, sample_configuration
from percolab.renorm import efron_stein_vminus, red_site_profile, renorm_distance, renorm_geodesic

box = LatticeBox.centered(2, 41)
config = sample_configuration(box, 0.5, seed=8)
lab = label_clusters(config)
a, b = nearest_giant_point(lab, (-10, 0)), nearest_giant_point(lab, (10, 0))
print("endpoints on the giant:", a, b)

# ## D^t against D
#
# This configuration is near the threshold and D is long.  Red edges cut
# the detours, more with a small K and less as t grows.

for t, K, rho in [(2, 17, 4), (4, 17, 4), (2, 5, 1), (4, 5, 1), (8, 5, 1)]:
    scheme = RenormScheme(t, K, rho)
    print(f"t={t} K={K:>4}: D^t = {renorm_distance(config, scheme, a, b):6.1f}  "
          f"D = {chemical_distance(config, a, b)}")

path = renorm_geodesic(config, RenormScheme(2, 5, 1), a, b)
print("geodesic: open steps", path.n_open, "red steps", path.n_red, "weight", path.weight)
print("boxes touched:", len(red_site_profile(path)))

# ## Efron-Stein
#
# Only boxes on the geodesic can raise D^t when resampled, so only those are
# redrawn.

config = sample_configuration(LatticeBox.centered(2, 56), 0.7, seed=6)
es = efron_stein_vminus(config, RenormScheme(4, 17), (0, 0), (20, 0), resamples=10, seed=7)
print(f"S = {es.S}, V- = {es.v_minus:.2f}, cap = {es.cap:.0f}, boxes resampled = {es.n_boxes}")
