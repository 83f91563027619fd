use rand::seq::SliceRandom;

use super::*;

const OWN_TARGETS: u8 = 6;

/// Applies `amount` damage and returns how much actually landed. Ward absorbs the first
/// positive instance; lethal damage destroys whatever it touches.
fn damage_creature(c: &mut CreatureInstance, amount: i32, lethal: bool) -> i32 {
    if amount <= 0 {
        return 0;
    }
    if c.keywords.contains(Keywords::WARD) {
        c.keywords.remove(Keywords::WARD);
        return 0;
    }
    c.defense -= amount;
    if lethal {
        c.defense = c.defense.min(0);
    }
    amount
}

impl GameState {
    /// Shuffles both constructed decks and deals the opening hands.
    pub fn begin_battle(&mut self) -> Result<(), EngineError> {
        if self.phase != Phase::Constructed {
            return Err(EngineError::Phase { expected: Phase::Constructed, found: self.phase });
        }
        if self.constructed_turn as usize != DECK_SIZE
            || self.players.iter().any(|p| p.total_picks() != DECK_SIZE)
        {
            return Err(EngineError::ConstructedIncomplete(self.constructed_turn));
        }
        for p in 0..2 {
            let mut deck: Vec<u8> = Vec::with_capacity(DECK_SIZE);
            for (id, &copies) in self.players[p].picks.iter().enumerate() {
                deck.extend(std::iter::repeat_n(id as u8, copies as usize));
            }
            deck.shuffle(&mut self.rng);
            let player = &mut self.players[p];
            player.deck = deck;
            for _ in 0..OPENING_HAND[p] {
                let card = player.deck.pop().expect("30-card deck");
                player.hand.push(card);
            }
        }
        self.phase = Phase::Battle;
        self.active_player = 0;
        self.battle_round = 1;
        let first = &mut self.players[0];
        first.turns_started = 1;
        first.mana_max = 1;
        first.mana_current = 1;
        Ok(())
    }

    /// Legality of every flat code for `player`, who must be the active player.
    pub fn legal_mask(&self, player: usize) -> Result<Vec<bool>, EngineError> {
        let mut mask = vec![false; self.action_space()];
        self.legal_mask_into(player, &mut mask)?;
        Ok(mask)
    }

    /// Writes the legal mask into `mask`, which must have the current stage's length.
    pub fn legal_mask_into(&self, player: usize, mask: &mut [bool]) -> Result<(), EngineError> {
        if self.phase == Phase::Finished {
            return Err(EngineError::Phase { expected: Phase::Battle, found: Phase::Finished });
        }
        if player != self.active_player {
            return Err(EngineError::NotYourTurn { player, active: self.active_player });
        }
        assert_eq!(mask.len(), self.action_space(), "mask length does not match the stage");
        mask.fill(false);
        let me = &self.players[player];
        if self.phase == Phase::Constructed {
            for (m, &copies) in mask.iter_mut().zip(&me.picks) {
                *m = copies < MAX_COPIES;
            }
            return Ok(());
        }

        let opp = &self.players[1 - player];
        mask[0] = true;
        for (slot, &id) in me.hand.iter().enumerate() {
            let card = self.pool.card(id);
            if card.cost > me.mana_current {
                continue;
            }
            match card.kind {
                CardKind::Creature => {
                    for (lane, creatures) in me.lanes.iter().enumerate() {
                        if creatures.len() < LANE_CAPACITY {
                            mask[Action::Summon { slot: slot as u8, lane: lane as u8 }.encode()] = true;
                        }
                    }
                }
                CardKind::Green => {
                    for (lane, creatures) in me.lanes.iter().enumerate() {
                        for pos in 0..creatures.len() {
                            let target = (lane * LANE_CAPACITY + pos) as u8;
                            mask[Action::Use { slot: slot as u8, target }.encode()] = true;
                        }
                    }
                }
                CardKind::Red | CardKind::Blue => {
                    for (lane, creatures) in opp.lanes.iter().enumerate() {
                        for pos in 0..creatures.len() {
                            let target = OWN_TARGETS + (lane * LANE_CAPACITY + pos) as u8;
                            mask[Action::Use { slot: slot as u8, target }.encode()] = true;
                        }
                    }
                    if card.kind == CardKind::Blue {
                        mask[Action::Use { slot: slot as u8, target: TARGET_OPPONENT_FACE }.encode()] = true;
                    }
                }
            }
        }
        for (lane, creatures) in me.lanes.iter().enumerate() {
            let defenders = &opp.lanes[lane];
            let guarded = defenders.iter().any(|d| d.keywords.contains(Keywords::GUARD));
            for (pos, c) in creatures.iter().enumerate() {
                if !c.ready() {
                    continue;
                }
                let attacker = (lane * LANE_CAPACITY + pos) as u8;
                for (target, d) in defenders.iter().enumerate() {
                    if !guarded || d.keywords.contains(Keywords::GUARD) {
                        mask[Action::Attack { attacker, target: target as u8 }.encode()] = true;
                    }
                }
                if !guarded {
                    mask[Action::Attack { attacker, target: ATTACK_FACE }.encode()] = true;
                }
            }
        }
        Ok(())
    }

    /// Checks a single decoded action against the rules.
    fn is_valid(&self, action: Action) -> bool {
        let me = &self.players[self.active_player];
        let opp = &self.players[1 - self.active_player];
        match (self.phase, action) {
            (Phase::Constructed, Action::Pick(id)) => {
                (id as usize) < POOL_SIZE && me.picks[id as usize] < MAX_COPIES
            }
            (Phase::Battle, Action::Pass) => true,
            (Phase::Battle, Action::Summon { slot, lane }) => {
                let Some(&id) = me.hand.get(slot as usize) else { return false };
                let card = self.pool.card(id);
                card.kind == CardKind::Creature
                    && card.cost <= me.mana_current
                    && (lane as usize) < LANES
                    && me.lanes[lane as usize].len() < LANE_CAPACITY
            }
            (Phase::Battle, Action::Use { slot, target }) => {
                let Some(&id) = me.hand.get(slot as usize) else { return false };
                let card = self.pool.card(id);
                if card.cost > me.mana_current {
                    return false;
                }
                match card.kind {
                    CardKind::Creature => false,
                    CardKind::Green => target < OWN_TARGETS && me.creature(target as usize).is_some(),
                    CardKind::Red => {
                        (OWN_TARGETS..TARGET_OPPONENT_FACE).contains(&target)
                            && opp.creature((target - OWN_TARGETS) as usize).is_some()
                    }
                    CardKind::Blue => {
                        target == TARGET_OPPONENT_FACE
                            || ((OWN_TARGETS..TARGET_OPPONENT_FACE).contains(&target)
                                && opp.creature((target - OWN_TARGETS) as usize).is_some())
                    }
                }
            }
            (Phase::Battle, Action::Attack { attacker, target }) => {
                let Some(c) = me.creature(attacker as usize) else { return false };
                if !c.ready() {
                    return false;
                }
                let lane = &opp.lanes[attacker as usize / LANE_CAPACITY];
                let has_guard = lane.iter().any(|d| d.keywords.contains(Keywords::GUARD));
                if target == ATTACK_FACE {
                    !has_guard
                } else {
                    match lane.get(target as usize) {
                        Some(d) => !has_guard || d.keywords.contains(Keywords::GUARD),
                        None => false,
                    }
                }
            }
            _ => false,
        }
    }

    /// Applies the active player's action and returns the reward pair `(player 1, player 2)`.
    ///
    /// On error the state is left untouched.
    pub fn apply_action(&mut self, index: usize) -> Result<[i32; 2], EngineError> {
        if self.phase == Phase::Finished {
            return Err(EngineError::Phase { expected: Phase::Battle, found: Phase::Finished });
        }
        let action = self.decode(index).map_err(|_| EngineError::IllegalAction(index))?;
        if !self.is_valid(action) {
            return Err(EngineError::IllegalAction(index));
        }
        match action {
            Action::Pick(id) => self.pick(id)?,
            Action::Pass => self.end_turn(),
            Action::Summon { slot, lane } => self.summon(slot as usize, lane as usize),
            Action::Use { slot, target } => self.use_item(slot as usize, target),
            Action::Attack { attacker, target } => self.attack(attacker as usize, target),
        }
        if self.phase == Phase::Battle {
            self.remove_dead();
            self.check_health();
        }
        Ok(self.outcome.map(Outcome::rewards).unwrap_or([0, 0]))
    }

    fn pick(&mut self, id: u8) -> Result<(), EngineError> {
        self.players[self.active_player].picks[id as usize] += 1;
        if self.active_player == 0 {
            self.active_player = 1;
        } else {
            self.active_player = 0;
            self.constructed_turn += 1;
            if self.constructed_turn as usize == DECK_SIZE {
                self.begin_battle()?;
            }
        }
        Ok(())
    }

    fn apply_card_effects(&mut self, card: &Card) {
        let me = self.active_player;
        self.players[me].health += card.player_hp;
        self.players[1 - me].health += card.opponent_hp;
        self.players[me].pending_draws += card.card_draw;
    }

    fn summon(&mut self, slot: usize, lane: usize) {
        let me = self.active_player;
        let id = self.players[me].hand.remove(slot);
        let card = self.pool.card(id).clone();
        let instance_id = self.next_instance_id;
        self.next_instance_id += 1;
        let player = &mut self.players[me];
        player.mana_current -= card.cost;
        player.lanes[lane].push(CreatureInstance {
            instance_id,
            card_id: id,
            attack: card.attack,
            defense: card.defense,
            keywords: card.keywords,
            can_attack: card.keywords.contains(Keywords::CHARGE),
            has_attacked_this_turn: false,
        });
        self.apply_card_effects(&card);
    }

    fn use_item(&mut self, slot: usize, target: u8) {
        let me = self.active_player;
        let id = self.players[me].hand.remove(slot);
        let card = self.pool.card(id).clone();
        self.players[me].mana_current -= card.cost;
        let target = target as usize;
        if target == TARGET_OPPONENT_FACE as usize {
            self.players[1 - me].health += card.defense;
        } else {
            let (owner, t) = if target < OWN_TARGETS as usize { (me, target) } else { (1 - me, target - 6) };
            let c = &mut self.players[owner].lanes[t / LANE_CAPACITY][t % LANE_CAPACITY];
            if card.kind == CardKind::Green {
                c.attack += card.attack;
                c.defense += card.defense;
                c.keywords.insert(card.keywords);
            } else {
                c.keywords.remove(card.keywords);
                c.attack = (c.attack + card.attack).max(0);
                damage_creature(c, -card.defense, false);
            }
        }
        self.apply_card_effects(&card);
    }

    fn attack(&mut self, attacker: usize, target: u8) {
        let me = self.active_player;
        let lane = attacker / LANE_CAPACITY;
        let (mine, theirs) = {
            let (a, b) = self.players.split_at_mut(1);
            if me == 0 {
                (&mut a[0], &mut b[0])
            } else {
                (&mut b[0], &mut a[0])
            }
        };
        let a = &mut mine.lanes[lane][attacker % LANE_CAPACITY];
        a.has_attacked_this_turn = true;
        if target == ATTACK_FACE {
            theirs.health -= a.attack;
            if a.keywords.contains(Keywords::DRAIN) {
                mine.health += a.attack;
            }
            return;
        }
        let d = &mut theirs.lanes[lane][target as usize];
        let defense_before = d.defense;
        let to_defender = damage_creature(d, a.attack, a.keywords.contains(Keywords::LETHAL));
        let to_attacker = damage_creature(a, d.attack, d.keywords.contains(Keywords::LETHAL));
        let defender_drains = d.keywords.contains(Keywords::DRAIN);
        if a.keywords.contains(Keywords::DRAIN) {
            mine.health += to_defender;
        }
        if defender_drains {
            theirs.health += to_attacker;
        }
        if to_defender > 0 && a.keywords.contains(Keywords::BREAKTHROUGH) {
            let excess = a.attack - defense_before;
            if excess > 0 {
                theirs.health -= excess;
            }
        }
    }

    fn remove_dead(&mut self) {
        for p in &mut self.players {
            for lane in &mut p.lanes {
                lane.retain(|c| c.defense > 0);
            }
        }
    }

    /// Finishes the game if any player is at or below zero health.
    fn check_health(&mut self) {
        let dead = [self.players[0].health <= 0, self.players[1].health <= 0];
        let outcome = match dead {
            [true, true] => Outcome::Draw,
            [true, false] => Outcome::P2Win,
            [false, true] => Outcome::P1Win,
            [false, false] => return,
        };
        self.finish(outcome);
    }

    fn finish(&mut self, outcome: Outcome) {
        self.phase = Phase::Finished;
        self.outcome = Some(outcome);
    }

    fn end_turn(&mut self) {
        if self.active_player == 1 {
            if self.battle_round >= MAX_ROUNDS {
                let [h1, h2] = [self.players[0].health, self.players[1].health];
                let outcome = match h1.cmp(&h2) {
                    std::cmp::Ordering::Greater => Outcome::P1Win,
                    std::cmp::Ordering::Less => Outcome::P2Win,
                    std::cmp::Ordering::Equal => Outcome::Draw,
                };
                self.finish(outcome);
                return;
            }
            self.battle_round += 1;
        }
        self.active_player = 1 - self.active_player;
        self.start_turn();
    }

    fn start_turn(&mut self) {
        let p = &mut self.players[self.active_player];
        p.turns_started += 1;
        p.mana_max = p.turns_started.min(MAX_MANA);
        p.mana_current = p.mana_max;
        for c in p.lanes.iter_mut().flatten() {
            c.can_attack = true;
            c.has_attacked_this_turn = false;
        }
        let draws = 1 + p.pending_draws;
        p.pending_draws = 0;
        for _ in 0..draws {
            match p.deck.pop() {
                Some(card) if p.hand.len() < MAX_HAND => p.hand.push(card),
                Some(_) => {}
                None => {
                    p.missed_draws += 1;
                    p.health -= p.missed_draws;
                }
            }
        }
    }
}
