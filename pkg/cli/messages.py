msgs_run = {
    'start': 'Run #{run_id}: {command} -> {output_dir} (seed {seed})',
    'done': 'Run #{run_id}: {command} finished in {seconds:.1f} s',
    'failed': 'Run #{run_id}: {command} failed with exit code {code}: {error}',
    'config_mismatch': 'Output directory {output_dir} was created with a different configuration; '
                       'use --force to overwrite',
    'dir_not_empty': 'Output directory {path} is not empty; use --force to overwrite',
}
msgs_gen_data = {
    'written': 'Generated {n_train} training and {n_test} test phantom pairs ({height}x{width})',
}
msgs_train = {
    'prior_done': 'Prior trained: loss {first:.4f} -> {last:.4f} over {iterations} iterations',
    'pamri_done': 'PAMRI trained: final NCE {nce:.4f}, rec {rec:.4f}, retrieval accuracy {accuracy:.3f}',
}
msgs_reconstruct = {
    'arm': 'Arm {arm}: reconstructing {count} test image(s)',
    'image': 'Arm {arm}: image {image_id} chose seed {seed_index}',
}
msgs_evaluate = {
    'arm': 'Arm {arm}: PSNR {psnr:.2f} dB, SSIM {ssim:.4f}, measurement loss {meas_loss:.4g}',
    'missing_arm': 'No reconstructions found for arm {arm}',
    'dice_note': 'Dice uses threshold segmentation of the reserved lesion intensity band',
}
msgs_verify = {
    'check': '{status} {name}: {value:.3g} (tolerance {tolerance:.3g})',
    'summary': '{passed}/{total} oracle checks passed',
}


def format_checks(results) -> str:
    lines = []
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        lines.append(msgs_verify['check'].format(status=status, name=result.name,
                                                 value=result.value, tolerance=result.tolerance))
    return "\n".join(lines)
