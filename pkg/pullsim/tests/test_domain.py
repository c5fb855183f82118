from django.test import SimpleTestCase

from pullsim.sim.domain import (
    GB, MB, CostModel, ImageSet, ImageSetKind, ImageSpec, LayerSpec, NodeConfig, PodSpec, PullPolicy,
    generate_cutoff_images, generate_image_set, parse_manifest, synthetic_digest, to_manifest,
)
from pullsim.sim.exceptions import EmptyImageSet


class ImageSetGenerationTests(SimpleTestCase):
    def test_variable_gb_totals(self):
        images = generate_image_set(ImageSetKind.VARIABLE_GB)
        self.assertEqual(len(images), 7)
        self.assertEqual(images.dedup_uncompressed(), 57_200 * MB)
        self.assertAlmostEqual(images.dedup_compressed() / GB, 28.83, places=2)
        self.assertEqual(images.layer_count(), 1 + 28)

    def test_variable_mb_totals(self):
        images = generate_image_set(ImageSetKind.VARIABLE_MB)
        self.assertEqual(len(images), 40)
        self.assertAlmostEqual(images.dedup_uncompressed() / GB, 16.808, places=6)
        self.assertAlmostEqual(images.dedup_compressed() / GB, 8.47, places=2)

    def test_smallest_and_largest_gb_images(self):
        images = generate_image_set('VariableGB')
        self.assertEqual(images.smallest.total_uncompressed, 2_120 * MB)
        self.assertEqual(images.largest.total_uncompressed, 14_360 * MB)
        self.assertEqual(len(images.largest.layers), 8)

    def test_shared_base_is_first_layer_everywhere(self):
        images = generate_image_set(ImageSetKind.VARIABLE_MB, seed=3)
        for image in images:
            self.assertEqual(image.layers[0], images.shared_base)

    def test_digests_depend_on_seed(self):
        a = generate_image_set(ImageSetKind.VARIABLE_GB, seed=0)
        b = generate_image_set(ImageSetKind.VARIABLE_GB, seed=0)
        c = generate_image_set(ImageSetKind.VARIABLE_GB, seed=1)
        self.assertEqual(a.images[3].digests, b.images[3].digests)
        self.assertNotEqual(a.images[3].digests, c.images[3].digests)

    def test_naive_total_counts_base_per_image(self):
        images = generate_image_set(ImageSetKind.VARIABLE_GB)
        base = images.shared_base.compressed_bytes
        self.assertEqual(images.naive_compressed() - images.dedup_compressed(), 6 * base)

    def test_cutoff_images_use_given_compressed_sizes(self):
        images = generate_cutoff_images(count=4)
        self.assertEqual([i.total_compressed for i in images], [83 * MB, 88 * MB, 93 * MB, 98 * MB])


class ImageSetValidationTests(SimpleTestCase):
    def test_empty_set_rejected(self):
        with self.assertRaises(EmptyImageSet):
            ImageSet.from_specs([])

    def test_layer_sizes_must_be_positive(self):
        with self.assertRaises(ValueError):
            LayerSpec(1, 0, 10)

    def test_same_digest_different_sizes_rejected(self):
        a = ImageSpec('a', (LayerSpec(7, 10, 20),))
        b = ImageSpec('b', (LayerSpec(7, 11, 20),))
        with self.assertRaises(ValueError):
            ImageSet.from_specs([a, b])

    def test_duplicate_names_rejected(self):
        layer = LayerSpec(1, 10, 20)
        with self.assertRaises(ValueError):
            ImageSet.from_specs([ImageSpec('x', (layer,)), ImageSpec('x', (layer,))])

    def test_manifest_text_survives_export(self):
        images = generate_image_set(ImageSetKind.VARIABLE_GB)
        parsed = parse_manifest(to_manifest(images))
        self.assertEqual(parsed.names, images.names)
        self.assertEqual(parsed.dedup_compressed(), images.dedup_compressed())

    def test_manifest_layer_outside_image_rejected(self):
        with self.assertRaises(ValueError):
            parse_manifest("  0000000000000001 10 20\n")

    def test_synthetic_digest_is_stable_and_positive(self):
        self.assertEqual(synthetic_digest('a', 1), synthetic_digest('a', 1))
        self.assertGreater(synthetic_digest('a', 1), 0)
        self.assertLess(synthetic_digest('a', 1), 2 ** 63)


class ConfigTests(SimpleTestCase):
    def test_thresholds_must_be_ordered(self):
        with self.assertRaises(ValueError):
            NodeConfig(gc_low_pct=0.9, gc_high_pct=0.85)

    def test_gke_profile(self):
        config = NodeConfig.gke()
        self.assertEqual(config.disk_capacity_bytes, 60 * GB)
        self.assertEqual(config.max_parallel_image_pulls, 4)
        self.assertEqual(config.net_bw, 1_250 * MB)

    def test_profile_overrides(self):
        config = NodeConfig.local_testbed(max_parallel_image_pulls=2)
        self.assertEqual(config.max_parallel_image_pulls, 2)
        self.assertEqual(config.with_overrides(cpu_cores=4).cpu_cores, 4)

    def test_cost_model_rejects_negative_costs(self):
        with self.assertRaises(ValueError):
            CostModel(download_cpu_per_byte=-1)

    def test_pod_spec_coerces_policy(self):
        image = generate_image_set(ImageSetKind.VARIABLE_GB).smallest
        pod = PodSpec('p', image, 'Always')
        self.assertIs(pod.pull_policy, PullPolicy.ALWAYS)
