#!/usr/bin/env node
/**
 * Entry point: serve the character-trigram cosine scorer over stdio.
 */

import { serve } from './serve.js';
import { trigramCosine } from './trigram.js';

serve('trigram-cosine', trigramCosine);
