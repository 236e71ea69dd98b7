/**
 * Regenerates the checked-in fixtures: an 8x8 RGB gradient PNG and the FMAP
 * produced for it by the bundled scorer. The FMAP doubles as the
 * cross-component contract fixture, so its bytes must stay stable.
 */
import { writeFileSync, mkdirSync } from 'fs';
import * as path from 'path';
import { PNG } from 'pngjs';
import { loadScorer } from '../src/model';
import { exportOne } from '../src/export';

const FIXTURE_DIR = path.join(__dirname, '..', 'fixtures');

async function main(): Promise<void> {
  mkdirSync(FIXTURE_DIR, { recursive: true });

  const png = new PNG({ width: 8, height: 8 });
  for (let v = 0; v < 8; v++) {
    for (let u = 0; u < 8; u++) {
      const i = (v * 8 + u) * 4;
      png.data[i] = u * 32;
      png.data[i + 1] = v * 32;
      png.data[i + 2] = 255 - u * 16 - v * 16;
      png.data[i + 3] = 255;
    }
  }
  const pngPath = path.join(FIXTURE_DIR, 'gradient_8x8.png');
  writeFileSync(pngPath, PNG.sync.write(png));

  const scorer = await loadScorer('default');
  const outPath = exportOne(scorer, pngPath, FIXTURE_DIR);
  console.log(`wrote ${pngPath} and ${outPath}`);
}

main().catch(e => {
  console.error(e);
  process.exitCode = 1;
});
